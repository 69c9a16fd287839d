use fixrocket::preprocess::FilterSpec;
use fixrocket::synth::{generate_cohort, spectral_audit, CohortSpec};

const TREMOR: (f64, f64) = (4.0, 7.0);
const SIGNATURE: (f64, f64) = (25.0, 60.0);

fn cohort(spec: CohortSpec) -> Vec<fixrocket::data::RawSession> {
    generate_cohort(&CohortSpec {
        hc_subjects: 12,
        pd_subjects: 12,
        ..spec
    })
    .unwrap()
}

#[test]
fn tremor_visible_before_filtering() {
    let s = cohort(CohortSpec::default());
    let a = spectral_audit(&s, &[TREMOR], None).unwrap();
    assert!(a[0].pd > a[0].hc, "{:?}", a[0]);
}

#[test]
fn tremor_removed_by_default_filter() {
    // without subject-level spread both classes differ only by the tremor
    let s = cohort(CohortSpec {
        signature_multiplier: 1.0,
        amplitude_spread: 0.0,
        idiosyncrasy: 0.0,
        ..CohortSpec::default()
    });
    let pre = spectral_audit(&s, &[TREMOR], None).unwrap()[0];
    let post = spectral_audit(&s, &[TREMOR], Some(FilterSpec::default())).unwrap()[0];
    assert!(pre.ratio() > 1.5, "{pre:?}");
    // what survives is the filter's numerical floor, common to both classes
    let excess = pre.pd - pre.hc;
    assert!(
        post.pd < excess * 1e-9 && post.hc < excess * 1e-9,
        "{post:?}"
    );
    assert!(
        (post.pd - post.hc).abs() < excess * 1e-9,
        "{pre:?} {post:?}"
    );
}

#[test]
fn signature_power_matches_multiplier() {
    let spec = CohortSpec::default();
    let s = cohort(spec.clone());
    for filter in [None, Some(FilterSpec::default())] {
        let a = spectral_audit(&s, &[SIGNATURE], filter).unwrap()[0];
        let rel = a.ratio() / spec.signature_multiplier;
        assert!(
            (rel - 1.0).abs() <= 0.15,
            "{filter:?} {a:?} ratio {}",
            a.ratio()
        );
    }
}
