use ivnnt_core::dgp::{generate, solve_beta, true_theta, DgpConfig};
use ivnnt_core::estimator::g_estimate;
use ivnnt_core::variance::estimate_report;
use ivnnt_core::{Index, LinkKind, Param};

fn reference_config(link: LinkKind) -> DgpConfig {
    let nnt: f64 = match link {
        LinkKind::Logit => 4.65,
        LinkKind::Probit => 3.02,
    };
    DgpConfig::standard(link, [1.0, 1.5], 1.0 / nnt).unwrap()
}

#[test]
fn generated_marginals_match_the_model() {
    let cfg = reference_config(LinkKind::Logit);
    let truth = solve_beta(&cfg).unwrap();
    let n = 400_000;
    let data = generate(&truth, &cfg, n, 42).unwrap();
    let c = data.counts();
    let nf = n as f64;
    let check = |observed: u64, p: f64| {
        let se = (p * (1.0 - p) / nf).sqrt();
        let z = (observed as f64 / nf - p).abs() / se;
        assert!(z < 4.0, "observed {} vs {p}, z = {z:.2}", observed as f64 / nf);
    };
    check(c.instrument_group(1), cfg.pi_z);
    check(c.exposure_group(1), cfg.target_exposure);
    let events: u64 = (0..2).flat_map(|z| (0..2).map(move |a| (z, a))).map(|(z, a)| c.cell_events(z, a)).sum();
    check(events, truth.achieved_outcome);
}

#[test]
fn estimates_converge_to_truth() {
    for link in [LinkKind::Logit, LinkKind::Probit] {
        let cfg = reference_config(link);
        let truth = solve_beta(&cfg).unwrap();
        let theta = true_theta(&truth, &cfg);
        let data = generate(&truth, &cfg, 1_000_000, 5).unwrap();
        let report = estimate_report::<f64>(&data, cfg.spec, 0.95).unwrap();
        assert!(!report.diagnostics.excluded);
        for p in Param::ALL {
            let k = p.index();
            let (est, se) = (report.theta_hat.to_array()[k], report.se[k]);
            let z = (est - theta.to_array()[k]).abs() / se;
            assert!(z < 4.5, "{link:?} {}: {est} vs {} (z = {z:.2})", p.name(), theta.to_array()[k]);
        }
        for idx in Index::ALL {
            assert!(report.ci.get(idx).is_some(), "{link:?} {idx} has no interval");
        }
    }
}

#[test]
fn single_precision_tracks_double() {
    let cfg = reference_config(LinkKind::Logit);
    let truth = solve_beta(&cfg).unwrap();
    let data = generate(&truth, &cfg, 20_000, 9).unwrap();
    let wide = g_estimate::<f64>(&data, cfg.spec).unwrap();
    let narrow = g_estimate::<f32>(&data, cfg.spec).unwrap();
    let narrow = narrow.theta_hat.cast::<f64>();
    for p in Param::ALL {
        let (a, b) = (wide.theta_hat.get(p), narrow.get(p));
        assert!((a - b).abs() <= 1e-3 * a.abs().max(1.0), "{}: {a} vs {b}", p.name());
    }
    let report = estimate_report::<f32>(&data, cfg.spec, 0.95).unwrap();
    let wide_report = estimate_report::<f64>(&data, cfg.spec, 0.95).unwrap();
    for idx in Index::ALL {
        let k = idx.param().index();
        let rel = (f64::from(report.se[k]) - wide_report.se[k]).abs() / wide_report.se[k];
        assert!(rel < 1e-2, "{idx} se relative gap {rel}");
    }
}
