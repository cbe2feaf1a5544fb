//! Interaction matrix R, transition count matrix T and per-user last-item
//! state, built in batch or folded one event at a time.
//!
//! Both matrices are stored dense and row-major. R is binary and idempotent
//! under repeated (user, item) events; T counts every consecutive pair of a
//! user's sequence, self-transitions included unless disabled.

use crate::error::Result;
use crate::ingest::{check_index, InteractionLog};

/// Rows affected by one applied interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Touched {
    pub user: u32,
    /// Row of T that gained a count (the user's previous item).
    pub source_row: Option<u32>,
    /// Column of T that gained a count (the new item).
    pub target_col: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixState {
    num_users: usize,
    num_items: usize,
    interactions: Vec<u8>,
    transitions: Vec<u32>,
    last_item: Vec<Option<u32>>,
    counts: Vec<u32>,
    applied: u64,
    count_self_transitions: bool,
}

impl MatrixState {
    pub fn new(num_users: usize, num_items: usize) -> Self {
        Self {
            num_users,
            num_items,
            interactions: vec![0; num_users * num_items],
            transitions: vec![0; num_items * num_items],
            last_item: vec![None; num_users],
            counts: vec![0; num_users],
            applied: 0,
            count_self_transitions: true,
        }
    }

    /// Same as [`MatrixState::new`] but repeated consecutive items do not add
    /// to the diagonal of T.
    pub fn without_self_transitions(num_users: usize, num_items: usize) -> Self {
        Self {
            count_self_transitions: false,
            ..Self::new(num_users, num_items)
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        num_users: usize,
        num_items: usize,
        interactions: Vec<u8>,
        transitions: Vec<u32>,
        last_item: Vec<Option<u32>>,
        counts: Vec<u32>,
        applied: u64,
        count_self_transitions: bool,
    ) -> Self {
        debug_assert_eq!(interactions.len(), num_users * num_items);
        debug_assert_eq!(transitions.len(), num_items * num_items);
        Self {
            num_users,
            num_items,
            interactions,
            transitions,
            last_item,
            counts,
            applied,
            count_self_transitions,
        }
    }

    /// Batch construction; equal to folding [`MatrixState::apply`] over the log.
    pub fn build(log: &InteractionLog) -> Result<Self> {
        let mut state = Self::new(log.num_users, log.num_items);
        state.extend(log)?;
        Ok(state)
    }

    /// Applies every event of `log` in order without reporting touched rows.
    pub fn extend(&mut self, log: &InteractionLog) -> Result<()> {
        for ev in &log.events {
            check_index("user", ev.user as usize, self.num_users)?;
            check_index("item", ev.item as usize, self.num_items)?;
        }
        let n = self.num_items;
        for ev in &log.events {
            let (u, i) = (ev.user as usize, ev.item as usize);
            self.interactions[u * n + i] = 1;
            if let Some(j) = self.last_item[u] {
                if self.count_self_transitions || j as usize != i {
                    self.transitions[j as usize * n + i] += 1;
                }
            }
            self.last_item[u] = Some(ev.item);
            self.counts[u] += 1;
        }
        self.applied += log.len() as u64;
        Ok(())
    }

    pub fn apply(&mut self, user: u32, item: u32) -> Result<Touched> {
        check_index("user", user as usize, self.num_users)?;
        check_index("item", item as usize, self.num_items)?;
        let (u, i, n) = (user as usize, item as usize, self.num_items);
        self.interactions[u * n + i] = 1;
        let mut touched = Touched {
            user,
            source_row: None,
            target_col: None,
        };
        if let Some(j) = self.last_item[u] {
            if self.count_self_transitions || j != item {
                self.transitions[j as usize * n + i] += 1;
                touched.source_row = Some(j);
                touched.target_col = Some(item);
            }
        }
        self.last_item[u] = Some(item);
        self.counts[u] += 1;
        self.applied += 1;
        Ok(touched)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn applied(&self) -> u64 {
        self.applied
    }

    pub fn counts_self_transitions(&self) -> bool {
        self.count_self_transitions
    }

    pub fn interacted(&self, user: u32, item: u32) -> bool {
        self.interactions[user as usize * self.num_items + item as usize] != 0
    }

    /// Row `user` of R as 0/1 bytes.
    pub fn interaction_row(&self, user: u32) -> &[u8] {
        let n = self.num_items;
        &self.interactions[user as usize * n..(user as usize + 1) * n]
    }

    pub fn interactions(&self) -> &[u8] {
        &self.interactions
    }

    pub fn transition(&self, from: u32, to: u32) -> u32 {
        self.transitions[from as usize * self.num_items + to as usize]
    }

    /// Row `from` of T: counts of items that followed `from`.
    pub fn transition_row(&self, from: u32) -> &[u32] {
        let n = self.num_items;
        &self.transitions[from as usize * n..(from as usize + 1) * n]
    }

    /// Column `to` of T: counts of items that preceded `to`.
    pub fn transition_col(&self, to: u32) -> impl Iterator<Item = u32> + '_ {
        self.transitions
            .iter()
            .skip(to as usize)
            .step_by(self.num_items)
            .copied()
    }

    pub fn transitions(&self) -> &[u32] {
        &self.transitions
    }

    pub fn transition_total(&self) -> u64 {
        self.transitions.iter().map(|&c| c as u64).sum()
    }

    pub fn last_item(&self, user: u32) -> Option<u32> {
        self.last_item[user as usize]
    }

    pub fn last_items(&self) -> &[Option<u32>] {
        &self.last_item
    }

    pub fn count(&self, user: u32) -> u32 {
        self.counts[user as usize]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }
}

/// Items of `user`'s events in the log's order.
pub fn user_sequence(log: &InteractionLog, user: u32) -> Vec<u32> {
    log.events
        .iter()
        .filter(|e| e.user == user)
        .map(|e| e.item)
        .collect()
}
