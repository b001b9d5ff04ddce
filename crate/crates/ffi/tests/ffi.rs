use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use tactica_core::features::{FeatureTable, PassSample};
use tactica_core::gbdt::{train_gbdt, GbdtHyperParams};
use tactica_ffi::*;

fn trained_model_file(dir: &std::path::Path) -> std::path::PathBuf {
    let samples = (0..60)
        .map(|i| {
            let x = i as f64;
            PassSample {
                event_id: i.to_string(),
                label: u8::from(x + (i % 7) as f64 > 33.0),
                selected: vec![],
                values: vec![x, (i % 5) as f64],
                imputed: vec![false, false],
            }
        })
        .collect();
    let table = FeatureTable {
        columns: vec!["a".into(), "b".into()],
        samples,
    };
    let hp = GbdtHyperParams {
        n_trees: 10,
        ..GbdtHyperParams::default()
    };
    let model = train_gbdt(&table, &hp).unwrap();
    let path = dir.join("model.json");
    model.save(&path).unwrap();
    path
}

fn last_error() -> String {
    let p = tactica_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn model_round_trip_through_handle() {
    let dir = tempfile::tempdir().unwrap();
    let path = trained_model_file(dir.path());
    let model = tactica_core::gbdt::GbdtModel::load(&path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle: *mut TacticaModel = ptr::null_mut();
    unsafe {
        assert_eq!(tactica_model_load(cpath.as_ptr(), &mut handle), TacticaStatus::Ok);
        assert!(!handle.is_null());
        let mut n = 0usize;
        assert_eq!(tactica_model_num_features(handle, &mut n), TacticaStatus::Ok);
        assert_eq!(n, 2);
        let row = [40.0, 1.0];
        let mut p = 0.0;
        assert_eq!(tactica_model_predict_proba(handle, row.as_ptr(), 2, &mut p), TacticaStatus::Ok);
        assert_eq!(p, tactica_core::gbdt::predict_proba(&model, &row).unwrap());
        let mut phi = [0.0; 2];
        let mut base = 0.0;
        assert_eq!(
            tactica_model_shap(handle, row.as_ptr(), 2, phi.as_mut_ptr(), &mut base),
            TacticaStatus::Ok
        );
        let margin = model.margin(&row).unwrap();
        assert!((base + phi[0] + phi[1] - margin).abs() < 1e-9);
        assert_eq!(
            tactica_model_predict_proba(handle, row.as_ptr(), 1, &mut p),
            TacticaStatus::Model
        );
        assert!(last_error().contains("expects 2"));
        tactica_model_free(handle);
        tactica_model_free(ptr::null_mut());
    }
}

#[test]
fn load_errors_are_reported() {
    let mut handle: *mut TacticaModel = ptr::null_mut();
    let missing = CString::new("/nonexistent/model.json").unwrap();
    unsafe {
        assert_eq!(tactica_model_load(missing.as_ptr(), &mut handle), TacticaStatus::Io);
        assert!(handle.is_null());
        assert!(last_error().contains("nonexistent"));
        assert_eq!(tactica_model_load(ptr::null(), &mut handle), TacticaStatus::NullPointer);
        let mut n = 0usize;
        assert_eq!(tactica_model_num_features(ptr::null(), &mut n), TacticaStatus::NullPointer);
    }
}

#[test]
fn scalar_functions() {
    let mut out = 0.0;
    unsafe {
        assert_eq!(tactica_field_weight(ptr::null(), 0.5, 52.5, 0.0, 1, &mut out), TacticaStatus::Ok);
        assert_eq!(out, 1.0);
        assert_eq!(tactica_field_weight(ptr::null(), 0.5, 60.0, 0.0, 1, &mut out), TacticaStatus::InvalidArgument);
        assert_eq!(
            tactica_arrival_time(0.0, 0.0, 0.0, 0.0, 7.8, 0.0, 0.2, 7.8, &mut out),
            TacticaStatus::Ok
        );
        assert!((out - 1.2).abs() < 1e-12);
        assert_eq!(
            tactica_arrival_time(0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.2, 0.0, &mut out),
            TacticaStatus::InvalidArgument
        );
        assert!(tactica_last_error_message().is_null() || !last_error().is_empty());
    }
}

#[test]
fn space_scores_match_core() {
    let players = [
        TacticaPlayer { id: 1, attacking: 1, x: -10.0, y: 0.0, vx: 0.0, vy: 0.0 },
        TacticaPlayer { id: 2, attacking: 1, x: 30.0, y: 5.0, vx: 0.0, vy: 0.0 },
        TacticaPlayer { id: 3, attacking: 0, x: 5.0, y: 0.0, vx: 0.0, vy: 0.0 },
    ];
    let pitch = TacticaPitch { length: 105.0, width: 68.0, grid_cell: 1.0 };
    let mut scores = [0.0; 3];
    let mut excluded = [9u8; 3];
    let status = unsafe {
        tactica_space_scores(
            players.as_ptr(),
            3,
            -10.0,
            0.0,
            &pitch,
            0.2,
            7.8,
            0.5,
            scores.as_mut_ptr(),
            excluded.as_mut_ptr(),
        )
    };
    assert_eq!(status, TacticaStatus::Ok);
    // Player 2 is beyond the ball in the opponent half with one defender.
    assert_eq!(excluded, [0, 1, 0]);
    assert_eq!(scores[1], 0.0);
    assert!(scores[0] > 0.0 && scores[2] > 0.0);
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/tactica.h")).unwrap();
    for name in [
        "tactica_last_error_message",
        "tactica_model_load",
        "tactica_model_free",
        "tactica_model_num_features",
        "tactica_model_predict_proba",
        "tactica_model_shap",
        "tactica_field_weight",
        "tactica_arrival_time",
        "tactica_space_scores",
        "typedef struct TacticaModel TacticaModel",
        "TACTICA_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
    // Compile the header as C when a compiler is around.
    if let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", "-std=c99", "-Wall", "-Werror"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/tactica.h"))
        .status()
    {
        assert!(status.success(), "header does not compile as C99");
    }
}
