use std::ffi::{CStr, CString};
use std::ptr;

use netrecon_ffi::*;

const DATA: &str = "a,b,12\nb,c,0\na,c,1\nc,d,15\n";

fn last_error() -> String {
    unsafe { CStr::from_ptr(nr_last_error_message()) }.to_string_lossy().into_owned()
}

struct Fixture {
    data: *mut NrData,
    model: *mut NrModel,
}

impl Fixture {
    fn new(spec: &str) -> Self {
        let text = CString::new(DATA).unwrap();
        let spec = CString::new(spec).unwrap();
        let mut data = ptr::null_mut();
        let mut model = ptr::null_mut();
        unsafe {
            assert_eq!(nr_data_parse(text.as_ptr(), false, false, &mut data), NrStatus::Ok);
            assert_eq!(nr_model_new(spec.as_ptr(), data, &mut model), NrStatus::Ok);
        }
        Fixture { data, model }
    }
}

impl Drop for Fixture {
    fn drop(&mut self) {
        unsafe {
            nr_model_free(self.model);
            nr_data_free(self.data);
        }
    }
}

#[test]
fn model_metadata() {
    let f = Fixture::new(r#"{"data":"poisson"}"#);
    unsafe {
        assert_eq!(nr_data_node_count(f.data), 4);
        assert_eq!(nr_model_param_count(f.model), 3);
        let names: Vec<String> = (0..3)
            .map(|i| CStr::from_ptr(nr_model_param_name(f.model, i)).to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["lambda_0", "lambda_1", "rho"]);
        assert!(nr_model_param_name(f.model, 3).is_null());
        assert!(!CStr::from_ptr(nr_version()).to_bytes().is_empty());
    }
}

#[test]
fn edge_posterior_and_marginal_posterior() {
    let f = Fixture::new(r#"{"data":"poisson"}"#);
    let theta = [0.5, 12.0, 0.3];
    let mut q = [0.0; 2];
    let mut lp = 0.0;
    unsafe {
        assert_eq!(nr_edge_posterior(f.model, f.data, theta.as_ptr(), 3, 0, 1, q.as_mut_ptr(), 2), NrStatus::Ok);
        assert_eq!(nr_log_marginal_posterior(f.model, f.data, theta.as_ptr(), 3, &mut lp), NrStatus::Ok);
    }
    assert!((q[0] + q[1] - 1.0).abs() < 1e-12 && q[1] > 0.99);
    assert!(lp.is_finite());
}

#[test]
fn errors_set_status_and_message() {
    let f = Fixture::new(r#"{"data":"poisson"}"#);
    let theta = [5.0, 1.0, 0.3];
    let mut q = [0.0; 2];
    unsafe {
        // Unordered rates are outside the domain.
        assert_eq!(nr_edge_posterior(f.model, f.data, theta.as_ptr(), 3, 0, 1, q.as_mut_ptr(), 2), NrStatus::Domain);
        assert!(!last_error().is_empty());
        assert_eq!(nr_edge_posterior(f.model, f.data, theta.as_ptr(), 3, 1, 1, q.as_mut_ptr(), 2), NrStatus::InvalidArgument);
        let ok = [0.5, 12.0, 0.3];
        assert_eq!(nr_edge_posterior(f.model, f.data, ok.as_ptr(), 3, 0, 1, q.as_mut_ptr(), 1), NrStatus::BufferTooSmall);
        assert_eq!(nr_edge_posterior(f.model, ptr::null(), ok.as_ptr(), 3, 0, 1, q.as_mut_ptr(), 2), NrStatus::NullPointer);

        let bad = CString::new("a,a,1\n").unwrap();
        let mut data = ptr::null_mut();
        assert_eq!(nr_data_parse(bad.as_ptr(), false, false, &mut data), NrStatus::Parse);
        assert!(data.is_null());
        assert!(last_error().contains("line 1"), "{}", last_error());

        let spec = CString::new(r#"{"data":"binomial","edge_types":3}"#).unwrap();
        let mut model = ptr::null_mut();
        assert_eq!(nr_model_new(spec.as_ptr(), f.data, &mut model), NrStatus::Model);
        let spec = CString::new(r#"{"data":"poison"}"#).unwrap();
        assert_eq!(nr_model_new(spec.as_ptr(), f.data, &mut model), NrStatus::Config);
    }
}

#[test]
fn sample_reconstruct_check() {
    let f = Fixture::new(r#"{"data":"poisson"}"#);
    let settings = CString::new(r#"{"chains":2,"warmup":200,"samples":200,"seed":3}"#).unwrap();
    let mut draws = ptr::null_mut();
    unsafe {
        assert_eq!(nr_sample(f.model, f.data, settings.as_ptr(), &mut draws), NrStatus::Ok);
        assert_eq!(nr_draws_len(draws), 400);
        let mut v = [0.0; 3];
        assert_eq!(nr_draws_values(draws, 399, v.as_mut_ptr(), 3), NrStatus::Ok);
        assert_eq!(nr_draws_values(draws, 400, v.as_mut_ptr(), 3), NrStatus::InvalidArgument);
        let mut mean = [0.0; 3];
        assert_eq!(nr_draws_mean(draws, mean.as_mut_ptr(), 3), NrStatus::Ok);
        assert!(mean[0] < mean[1]);
        let mut probs = [0.0; 12];
        assert_eq!(nr_edge_probabilities(f.model, f.data, draws, probs.as_mut_ptr(), 12), NrStatus::Ok);
        for row in probs.chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
        let (mut p, mut r2) = (0.0, 0.0);
        assert_eq!(nr_ppc(f.model, f.data, draws, 1, &mut p, &mut r2), NrStatus::Ok);
        assert!((0.0..=1.0).contains(&p));
        nr_draws_free(draws);
    }
}

#[test]
fn null_handles_are_tolerated() {
    unsafe {
        nr_data_free(ptr::null_mut());
        nr_model_free(ptr::null_mut());
        nr_draws_free(ptr::null_mut());
        assert_eq!(nr_data_node_count(ptr::null()), 0);
        assert_eq!(nr_draws_len(ptr::null()), 0);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/netrecon.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}
