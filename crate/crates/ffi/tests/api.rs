use cocycle_lab_ffi::*;
use std::ffi::CStr;
use std::ptr;

fn last_error() -> String {
    let p = cocycle_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn exponent_and_rotation_of_free_cocycle() {
    unsafe {
        let mut v = ptr::null_mut();
        let mut a = ptr::null_mut();
        assert_eq!(cocycle_potential_new_constant(0.0, &mut v), CocycleStatus::Ok);
        assert_eq!(cocycle_frequency_new_golden(&mut a), CocycleStatus::Ok);
        let mut le = CocycleLe::default();
        assert_eq!(
            cocycle_le_estimate(v, 3.0, 0.0, a, 20_000, 4, 1, &mut le),
            CocycleStatus::Ok
        );
        assert!((le.value - ((3.0 + 5f64.sqrt()) / 2.0).ln()).abs() < 1e-3);
        let mut rho = 0.0;
        assert_eq!(
            cocycle_rotation_number(v, 2f64.sqrt(), a, 1_000_000, &mut rho),
            CocycleStatus::Ok
        );
        assert!((rho - 0.125).abs() < 1e-4, "{rho}");
        assert!(cocycle_last_error().is_null());
        cocycle_potential_free(v);
        cocycle_frequency_free(a);
    }
}

#[test]
fn error_codes_and_messages() {
    unsafe {
        let mut out = 0.0;
        assert_eq!(cocycle_herman_bound(10.0, 1e4, 1.0, &mut out), CocycleStatus::Domain);
        assert!(last_error().contains("|E| > 2"));
        assert_eq!(
            cocycle_herman_bound(10.0, 1e4, 3.0, ptr::null_mut()),
            CocycleStatus::NullPointer
        );
        let mut f = ptr::null_mut();
        assert_eq!(
            cocycle_frequency_new_rational(1, 0, &mut f),
            CocycleStatus::InvalidArgument
        );
        assert!(f.is_null());
        assert_eq!(
            cocycle_le_estimate(ptr::null(), 1.0, 0.0, ptr::null(), 1000, 1, 0, ptr::null_mut()),
            CocycleStatus::NullPointer
        );
        assert!(last_error().contains("potential"));
        // a later success clears the message
        assert_eq!(cocycle_herman_bound(10.0, 1e4, 3.0, &mut out), CocycleStatus::Ok);
        assert!(cocycle_last_error().is_null());
        assert!((out - 0.95242).abs() < 1e-4);
        cocycle_potential_free(ptr::null_mut());
    }
}

#[test]
fn trace_and_arithmetic() {
    unsafe {
        let mut v = ptr::null_mut();
        assert_eq!(cocycle_potential_new_poisson_peak(10.0, 1e4, &mut v), CocycleStatus::Ok);
        let mut y = 0.0;
        assert_eq!(cocycle_potential_eval(v, 0.0, &mut y), CocycleStatus::Ok);
        assert_eq!(y, 10.0);
        // q = 1: trace of S_{E - V(x)} is E - V(x)
        let mut t = 0.0;
        assert_eq!(cocycle_qstep_trace(v, 1.5, 1, 0.3, &mut t), CocycleStatus::Ok);
        assert_eq!(cocycle_potential_eval(v, 0.3, &mut y), CocycleStatus::Ok);
        assert!((t - (1.5 - y)).abs() < 1e-12);
        let mut g = ptr::null_mut();
        assert_eq!(cocycle_frequency_new_golden(&mut g), CocycleStatus::Ok);
        let mut member = false;
        assert_eq!(cocycle_dc1_member(g, 0.1, 2.0, 10_000, &mut member), CocycleStatus::Ok);
        assert!(member);
        cocycle_frequency_free(g);
        cocycle_potential_free(v);
    }
}

#[test]
fn reduction_handle() {
    unsafe {
        let mut v = ptr::null_mut();
        let mut a = ptr::null_mut();
        assert_eq!(cocycle_potential_new_poisson_peak(10.0, 1e4, &mut v), CocycleStatus::Ok);
        assert_eq!(
            cocycle_frequency_new_irrational(0.5 + 1e-5 * 0.7548776662466927, 10_000, &mut a),
            CocycleStatus::Ok
        );
        let mut r = ptr::null_mut();
        assert_eq!(
            cocycle_reduce(v, -0.125, a, 1, 2, 3, 1e-6, &mut r),
            CocycleStatus::Ok,
            "{}",
            {
                let p = cocycle_last_error();
                if p.is_null() {
                    String::new()
                } else {
                    CStr::from_ptr(p).to_string_lossy().into_owned()
                }
            }
        );
        let mut res = 1.0;
        assert_eq!(cocycle_reduction_residual(r, &mut res), CocycleStatus::Ok);
        assert!(res < 1e-6, "{res}");
        let n = cocycle_reduction_ledger_len(r);
        assert!(n >= 2);
        let mut row = CocycleLedgerRow::default();
        assert_eq!(cocycle_reduction_ledger_row(r, 0, &mut row), CocycleStatus::Ok);
        assert_eq!(row.step, 0);
        assert_eq!(
            cocycle_reduction_ledger_row(r, n, &mut row),
            CocycleStatus::InvalidArgument
        );
        cocycle_reduction_free(r);

        // rational frequency is rejected
        let mut h = ptr::null_mut();
        assert_eq!(cocycle_frequency_new_rational(1, 2, &mut h), CocycleStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(
            cocycle_reduce(v, -0.125, h, 1, 2, 3, 1e-6, &mut r),
            CocycleStatus::Unsupported
        );
        assert!(r.is_null());
        cocycle_frequency_free(h);
        cocycle_frequency_free(a);
        cocycle_potential_free(v);
    }
}
