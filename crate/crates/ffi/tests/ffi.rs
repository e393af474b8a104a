use std::ffi::{CStr, CString};
use std::ptr;

use exemplar_ps_ffi::*;

fn last_error() -> String {
    let p = eps_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Handles {
    dict: *mut EpsDictionary,
    rig: *mut EpsRig,
}

impl Drop for Handles {
    fn drop(&mut self) {
        unsafe {
            eps_dictionary_free(self.dict);
            eps_rig_free(self.rig);
        }
    }
}

fn handles(divisor: u32, q: usize) -> Handles {
    let mut dict = ptr::null_mut();
    let mut rig = ptr::null_mut();
    unsafe {
        assert_eq!(eps_dictionary_default(divisor, &mut dict), EpsStatus::Ok);
        assert_eq!(eps_rig_hemisphere(q, &mut rig), EpsStatus::Ok);
    }
    Handles { dict, rig }
}

#[test]
fn fit_recovers_rendered_abundances() {
    let h = handles(10, 40);
    unsafe {
        let m = eps_dictionary_len(h.dict);
        assert_eq!(m, 20);
        assert_eq!(eps_rig_len(h.rig), 40);
        let n = [0.2, -0.1, 0.97];
        let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]) as f64;
        let n = n.map(|x: f64| x / norm.sqrt());
        let mut c = vec![0.0; m];
        c[3] = 0.7;
        let mut prof = vec![0.0; 40];
        assert_eq!(eps_render_profile(h.dict, h.rig, n.as_ptr(), c.as_ptr(), m, prof.as_mut_ptr(), 40), EpsStatus::Ok);
        let mut fit = vec![0.0; m];
        assert_eq!(eps_fit_pixel(h.dict, h.rig, n.as_ptr(), prof.as_ptr(), 40, 0.0, fit.as_mut_ptr(), m), EpsStatus::Ok);
        let mut back = vec![0.0; 40];
        eps_render_profile(h.dict, h.rig, n.as_ptr(), fit.as_ptr(), m, back.as_mut_ptr(), 40);
        let err: f64 = back.iter().zip(&prof).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-6, "{err}");
    }
}

#[test]
fn bank_search_finds_candidate_normal() {
    let h = handles(10, 30);
    unsafe {
        let schedule = [10.0, 5.0];
        let mut bank = ptr::null_mut();
        assert_eq!(eps_bank_build(h.dict, h.rig, schedule.as_ptr(), 2, &mut bank), EpsStatus::Ok);
        let m = eps_dictionary_len(h.dict);
        let n = [0.0, 0.0, 1.0];
        let mut c = vec![0.0; m];
        c[5] = 1.0;
        let mut prof = vec![0.0; 30];
        eps_render_profile(h.dict, h.rig, n.as_ptr(), c.as_ptr(), m, prof.as_mut_ptr(), 30);
        let mut normal = [0.0; 3];
        let mut abund = vec![0.0; m];
        let mut residual = -1.0;
        let status = eps_estimate_normal(bank, prof.as_ptr(), 30, 0, normal.as_mut_ptr(), abund.as_mut_ptr(), m, &mut residual);
        assert_eq!(status, EpsStatus::Ok);
        assert!((normal[2] - 1.0).abs() < 1e-12, "{normal:?}");
        assert!(residual < 1e-6);
        eps_bank_free(bank);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut dict = ptr::null_mut();
        assert_eq!(eps_dictionary_default(7, &mut dict), EpsStatus::InvalidArgument);
        assert!(dict.is_null());
        assert!(!last_error().is_empty());

        let path = CString::new("/no/such/dictionary.bdct").unwrap();
        assert_eq!(eps_dictionary_load(path.as_ptr(), &mut dict), EpsStatus::Io);

        let mut rig = ptr::null_mut();
        assert_eq!(eps_rig_hemisphere(2, &mut rig), EpsStatus::InvalidArgument);
        assert_eq!(eps_rig_hemisphere(10, ptr::null_mut()), EpsStatus::NullPointer);
        assert!(last_error().contains("null"));

        let h = handles(10, 10);
        let n = [0.0, 0.0, 1.0];
        let prof = [0.0; 9];
        let mut out = [0.0; 20];
        let s = eps_fit_pixel(h.dict, h.rig, n.as_ptr(), prof.as_ptr(), 9, 0.0, out.as_mut_ptr(), 20);
        assert_eq!(s, EpsStatus::InvalidArgument);
        assert_eq!(eps_dictionary_len(ptr::null()), 0);
        eps_dictionary_free(ptr::null_mut());
    }
}

#[test]
fn dictionary_file_round_trip() {
    let h = handles(10, 10);
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("d.bdct").to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(eps_dictionary_save(h.dict, path.as_ptr()), EpsStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(eps_dictionary_load(path.as_ptr(), &mut loaded), EpsStatus::Ok);
        assert_eq!(eps_dictionary_len(loaded), 20);
        assert_eq!(eps_dictionary_channels(loaded), 1);
        eps_dictionary_free(loaded);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/exemplar_ps.h")).unwrap();
    for f in ["eps_last_error", "eps_dictionary_default", "eps_bank_build", "eps_estimate_normal", "eps_fit_pixel"] {
        assert!(header.contains(f), "{f} missing from header");
    }
    assert!(header.contains("typedef struct EpsBank EpsBank;"));
}
