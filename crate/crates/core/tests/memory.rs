//! Peak heap usage of the ELBO estimators, measured by a counting allocator.

mod common;

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;

use common::*;
use mixflow::math::stream_rng;
use mixflow::{augment_target, MixFlow, MomentumModel};

struct Counting;

thread_local! {
    static CURRENT: Cell<isize> = const { Cell::new(0) };
    static PEAK: Cell<isize> = const { Cell::new(0) };
}

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let _ = CURRENT.try_with(|c| {
            let v = c.get() + layout.size() as isize;
            c.set(v);
            let _ = PEAK.try_with(|p| p.set(p.get().max(v)));
        });
        System.alloc(layout)
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        let _ = CURRENT.try_with(|c| c.set(c.get() - layout.size() as isize));
        System.dealloc(ptr, layout)
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

/// Peak bytes allocated on this thread above the level at entry.
fn peak_during<R>(f: impl FnOnce() -> R) -> (R, isize) {
    let base = CURRENT.with(|c| c.get());
    PEAK.with(|p| p.set(base));
    let out = f();
    (out, PEAK.with(|p| p.get()) - base)
}

#[test]
fn constant_memory_estimator_peak_is_independent_of_n() {
    let lap = MomentumModel::laplace(2);
    let t = synthetic("banana");
    let r = meanfield_reference(&t, lap);
    let target = augment_target(t.clone(), lap);
    let flow = ham_flow(&t, lap, 0.02, 5);
    let mut const_peaks = Vec::new();
    let mut window_peaks = Vec::new();
    for n in [10, 100, 1000] {
        let mf = MixFlow::new(r.clone(), flow.clone(), n, 0).unwrap();
        let (v, peak) = peak_during(|| mf.estimate_elbo_const_mem(&target, &mut stream_rng(1, 0)).unwrap());
        assert!(v.is_finite());
        const_peaks.push(peak);
        let (_, peak) = peak_during(|| mf.estimate_elbo(&target, &mut stream_rng(1, 0)).unwrap());
        window_peaks.push(peak);
    }
    assert!(const_peaks.iter().all(|&p| p == const_peaks[0]), "{const_peaks:?}");
    // The stored-trajectory estimator grows with N, which shows the probe works.
    assert!(window_peaks[2] > 10 * window_peaks[0], "{window_peaks:?}");
}
