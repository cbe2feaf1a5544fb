use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use autoseqrec::persist::{self, CheckpointMeta};
use autoseqrec::{Activation, Event, InferenceConfig, InteractionLog, MatrixState, ModelParams, ReplayOptions, Session, TransitionTransform};
use autoseqrec_ffi::*;

const N: usize = 12;
const K: usize = 4;
const DIGEST: &str = "feedface";

fn checkpoint(dir: &Path) -> (PathBuf, ModelParams) {
    let params = ModelParams::init(N, K, 3, Activation::Identity, TransitionTransform::Log1p).unwrap();
    let path = dir.join("m.asrq");
    let meta = CheckpointMeta { num_users: 3, seed: 3, vocab_digest: DIGEST.into() };
    persist::save_checkpoint(&params, &meta, &path).unwrap();
    // The library works on the f32-rounded weights stored on disk.
    let (params, _) = persist::load_checkpoint(&path, None).unwrap();
    (path, params)
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(asr_last_error_message()) }.to_string_lossy().into_owned()
}

fn events() -> Vec<(u32, u32)> {
    (0..40u32).map(|t| (t % 3, (t * 7 + t / 3) % N as u32)).collect()
}

#[test]
fn header_declares_every_export() {
    let src = include_str!("../src/lib.rs");
    let header = include_str!("../include/autoseqrec.h");
    let mut exported = 0;
    for line in src.lines() {
        let Some(rest) = line.split("extern \"C\" fn ").nth(1) else { continue };
        let name = rest.split('(').next().unwrap();
        assert!(
            header.contains(&format!(" {name}(")) || header.contains(&format!("*{name}(")),
            "{name} missing from header"
        );
        exported += 1;
    }
    assert!(exported >= 15, "found only {exported} exports");
    for ty in ["AsrStatus", "AsrModel", "AsrSession", "AsrScoreConfig"] {
        assert!(header.contains(&format!("typedef struct {ty}")) || header.contains(&format!("typedef enum {ty}")));
    }
}

#[test]
fn status_codes_match_header() {
    let header = include_str!("../include/autoseqrec.h");
    let pairs = [
        ("ASR_STATUS_OK", AsrStatus::Ok),
        ("ASR_STATUS_NULL_POINTER", AsrStatus::NullPointer),
        ("ASR_STATUS_INVALID_ARGUMENT", AsrStatus::InvalidArgument),
        ("ASR_STATUS_OUT_OF_RANGE", AsrStatus::OutOfRange),
        ("ASR_STATUS_IO", AsrStatus::Io),
        ("ASR_STATUS_FORMAT", AsrStatus::Format),
        ("ASR_STATUS_VOCABULARY_DRIFT", AsrStatus::VocabularyDrift),
        ("ASR_STATUS_DIMENSION_MISMATCH", AsrStatus::DimensionMismatch),
        ("ASR_STATUS_BUFFER_TOO_SMALL", AsrStatus::BufferTooSmall),
        ("ASR_STATUS_INTERNAL", AsrStatus::Internal),
    ];
    for (name, status) in pairs {
        assert!(header.contains(&format!("{name} = {},", status as i32)), "{name}");
    }
}

#[test]
fn steps_match_library_replay() {
    let dir = tempfile::tempdir().unwrap();
    let (path, params) = checkpoint(dir.path());
    let evs = events();

    // Reference: the library's own replay.
    let log = InteractionLog::new(
        evs.iter().enumerate().map(|(k, &(user, item))| Event { user, item, timestamp: k as i64, order: k as u64 }).collect(),
        3,
        N,
    )
    .unwrap();
    let mut session = Session::new(&params, MatrixState::new(3, N)).unwrap();
    let expected: Vec<usize> = session
        .replay(&log, &InferenceConfig::default(), &ReplayOptions::default())
        .unwrap()
        .iter()
        .map(|r| r.rank)
        .collect();

    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(asr_model_load(cstr(&path).as_ptr(), ptr::null(), &mut model), AsrStatus::Ok);
        let (mut m, mut n, mut k) = (0, 0, 0);
        assert_eq!(asr_model_dims(model, &mut m, &mut n, &mut k), AsrStatus::Ok);
        assert_eq!((m, n, k), (3, N, K));

        let mut s = ptr::null_mut();
        assert_eq!(asr_session_new(model, 3, &mut s), AsrStatus::Ok);
        asr_model_free(model);

        let cfg = asr_score_config_default();
        let mut got = Vec::new();
        for &(u, i) in &evs {
            let mut rank = 0;
            assert_eq!(asr_session_step(s, u, i, &cfg, &mut rank), AsrStatus::Ok);
            got.push(rank);
        }
        assert_eq!(got, expected);

        let mut applied = 0;
        assert_eq!(asr_session_applied(s, &mut applied), AsrStatus::Ok);
        assert_eq!(applied, evs.len() as u64);

        let mut scores = vec![0.0; N];
        let mut fallback = true;
        assert_eq!(asr_session_scores(s, 1, ptr::null(), scores.as_mut_ptr(), N, &mut fallback), AsrStatus::Ok);
        assert!(!fallback);
        let reference = session.predict(1, &InferenceConfig::default()).unwrap();
        assert_eq!(scores, reference.scores.values);

        let mut items = [0u32; 4];
        let mut top_scores = [0.0; 4];
        let mut written = 0;
        assert_eq!(
            asr_session_top_k(s, 1, ptr::null(), 4, items.as_mut_ptr(), top_scores.as_mut_ptr(), &mut written),
            AsrStatus::Ok
        );
        assert_eq!(written, 4);
        assert_eq!(items.to_vec(), autoseqrec::scoring::top_k(&reference.scores.values, 4).unwrap());
        asr_session_free(s);
    }
}

#[test]
fn errors_are_reported_not_raised() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = checkpoint(dir.path());
    unsafe {
        let mut model = ptr::null_mut();
        let missing = cstr(&dir.path().join("missing.asrq"));
        assert_eq!(asr_model_load(missing.as_ptr(), ptr::null(), &mut model), AsrStatus::Io);
        assert!(model.is_null());
        assert!(last_error().contains("missing.asrq"));

        let wrong = CString::new("0000").unwrap();
        assert_eq!(asr_model_load(cstr(&path).as_ptr(), wrong.as_ptr(), &mut model), AsrStatus::VocabularyDrift);

        let garbage = dir.path().join("garbage.asrq");
        std::fs::write(&garbage, b"not a checkpoint").unwrap();
        assert_eq!(asr_model_load(cstr(&garbage).as_ptr(), ptr::null(), &mut model), AsrStatus::Format);

        assert_eq!(asr_model_load(ptr::null(), ptr::null(), &mut model), AsrStatus::NullPointer);
        assert_eq!(asr_model_load(cstr(&path).as_ptr(), ptr::null(), ptr::null_mut()), AsrStatus::NullPointer);

        let digest = CString::new(DIGEST).unwrap();
        assert_eq!(asr_model_load(cstr(&path).as_ptr(), digest.as_ptr(), &mut model), AsrStatus::Ok);
        assert_eq!(last_error(), "");

        let mut buf = [0 as std::ffi::c_char; 4];
        assert_eq!(asr_model_vocab_digest(model, buf.as_mut_ptr(), buf.len()), AsrStatus::BufferTooSmall);
        let mut buf = [0 as std::ffi::c_char; 16];
        assert_eq!(asr_model_vocab_digest(model, buf.as_mut_ptr(), buf.len()), AsrStatus::Ok);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_str().unwrap(), DIGEST);

        let mut s = ptr::null_mut();
        assert_eq!(asr_session_new(model, 2, &mut s), AsrStatus::Ok);
        assert_eq!(asr_session_apply(s, 2, 0), AsrStatus::OutOfRange);
        assert_eq!(asr_session_apply(s, 0, N as u32), AsrStatus::OutOfRange);
        let mut rank = 0;
        assert_eq!(asr_session_step(s, 0, N as u32, ptr::null(), &mut rank), AsrStatus::OutOfRange);

        let mut bad = asr_score_config_default();
        bad.lambda1 = 0.7;
        bad.lambda2 = 0.5;
        assert_eq!(asr_session_step(s, 0, 1, &bad, &mut rank), AsrStatus::InvalidArgument);

        let mut short = vec![0.0; N - 1];
        assert_eq!(
            asr_session_scores(s, 0, ptr::null(), short.as_mut_ptr(), short.len(), ptr::null_mut()),
            AsrStatus::BufferTooSmall
        );
        let mut applied = 0;
        assert_eq!(asr_session_applied(s, &mut applied), AsrStatus::Ok);
        assert_eq!(applied, 0, "failed calls must not mutate the session");

        asr_session_free(s);
        asr_model_free(model);
        asr_session_free(ptr::null_mut());
        asr_model_free(ptr::null_mut());
    }
}

#[test]
fn state_snapshot_resumes_session() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = checkpoint(dir.path());
    let snap = dir.path().join("state.asrq");
    let evs = events();
    let digest = CString::new(DIGEST).unwrap();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(asr_model_load(cstr(&path).as_ptr(), ptr::null(), &mut model), AsrStatus::Ok);

        let mut straight = ptr::null_mut();
        let mut first = ptr::null_mut();
        asr_session_new(model, 3, &mut straight);
        asr_session_new(model, 3, &mut first);
        let (head, tail) = evs.split_at(20);
        let mut expected = Vec::new();
        for &(u, i) in &evs {
            let mut r = 0;
            asr_session_step(straight, u, i, ptr::null(), &mut r);
            expected.push(r);
        }
        let mut got = Vec::new();
        for &(u, i) in head {
            let mut r = 0;
            asr_session_step(first, u, i, ptr::null(), &mut r);
            got.push(r);
        }
        assert_eq!(asr_session_save_state(first, cstr(&snap).as_ptr(), digest.as_ptr()), AsrStatus::Ok);
        asr_session_free(first);

        let mut resumed = ptr::null_mut();
        assert_eq!(asr_session_load_state(model, cstr(&snap).as_ptr(), &mut resumed), AsrStatus::Ok);
        for &(u, i) in tail {
            let mut r = 0;
            asr_session_step(resumed, u, i, ptr::null(), &mut r);
            got.push(r);
        }
        assert_eq!(got, expected);

        let other = CString::new("other").unwrap();
        asr_session_save_state(resumed, cstr(&snap).as_ptr(), other.as_ptr());
        let mut drifted = ptr::null_mut();
        assert_eq!(asr_session_load_state(model, cstr(&snap).as_ptr(), &mut drifted), AsrStatus::VocabularyDrift);
        assert!(drifted.is_null());

        asr_session_free(resumed);
        asr_session_free(straight);
        asr_model_free(model);
    }
}

fn c_compiler() -> Option<&'static str> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
}

#[test]
fn header_is_valid_c() {
    let Some(cc) = c_compiler() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let smoke = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/smoke.c");
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&smoke)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

/// Links examples/smoke.c against the static library when the build left
/// one next to the test binary.
#[test]
fn c_program_links_and_runs() {
    let Some(cc) = c_compiler() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libautoseqrec_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, _) = checkpoint(dir.path());
    let bin = dir.path().join("smoke");
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let out = Command::new(cc)
        .args(["-std=c99", "-I"])
        .arg(manifest.join("include"))
        .arg(manifest.join("examples/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).arg(&ckpt).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains(&format!("items={N} hidden={K}")));
    assert!(stdout.trim_end().ends_with("ok"));
}
