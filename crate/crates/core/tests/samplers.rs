use atlas_core::diagnostics::{mean, moment_checks, variance};
use atlas_core::harness::{run_chains, RunConfig};
use atlas_core::samplers::{run_chain, Branch, ChainSettings, SamplerKind};
use atlas_core::targets::model_from_name;

fn config(model: &str, sampler: SamplerKind, chains: usize, draws: usize, seed: u64) -> RunConfig {
    RunConfig::new(model, sampler, chains, draws, seed)
}

#[test]
fn nout_fixed_moments_on_standard_normals() {
    for d in [1, 2, 10] {
        let model = format!("std_normal-{d}");
        let run = run_chains(&config(&model, SamplerKind::NoutFixed, 32, 2000, 3)).unwrap();
        let reference = model_from_name(&model).unwrap().moments().unwrap();
        let (m1, m2) = moment_checks(&run.records, &reference).unwrap();
        for (k, c) in m1.iter().chain(&m2).enumerate() {
            assert!(c.within(4.0), "{model} moment {k}: {c:?}");
        }
    }
}

#[test]
fn atlas_simple_costs_more_per_iteration_than_nout() {
    let per_iter = |sampler| {
        let c = RunConfig { eps0_override: Some(0.4), ..config("std_normal-10", sampler, 4, 500, 5) };
        let run = run_chains(&c).unwrap();
        let cost: u64 = run.records.iter().map(|r| r.sampling_cost).sum();
        cost as f64 / (4.0 * 500.0)
    };
    let (simple, nout) = (per_iter(SamplerKind::AtlasSimple), per_iter(SamplerKind::NoutFixed));
    assert!(simple > nout, "simple {simple} vs nout {nout}");
}

#[test]
fn atlas_simple_recovers_the_funnel_scale() {
    let run = run_chains(&config("funnel-11", SamplerKind::AtlasSimple, 4, 20000, 8)).unwrap();
    let x0: Vec<f64> = run.records.iter().flat_map(|r| r.column(0)).collect();
    let sd = variance(&x0).sqrt();
    assert!((2.6..=3.4).contains(&sd), "sd {sd}, mean {}", mean(&x0));
}

#[test]
fn chains_are_deterministic_and_costs_add_up() {
    let model = model_from_name("funnel-5").unwrap();
    for kind in SamplerKind::ALL {
        let mut s = ChainSettings::new(kind, 300, 17);
        s.warmup.tune_iters = 50;
        let a = run_chain(model.as_ref(), &s, 1).unwrap();
        let b = run_chain(model.as_ref(), &s, 1).unwrap();
        assert_eq!(a, b, "{kind}");
        assert_eq!(a.draws.len(), a.outcomes.len());
        let total: u64 = a.outcomes.iter().map(|o| o.grad_cost).sum();
        assert_eq!(total, a.sampling_cost, "{kind}");
        let other = run_chain(model.as_ref(), &s, 2).unwrap();
        assert_ne!(a.draws, other.draws);
    }
}

#[test]
fn delayed_step_counts_invert() {
    let model = model_from_name("funnel-11").unwrap();
    let s = ChainSettings::new(SamplerKind::Atlas, 3000, 4);
    let rec = run_chain(model.as_ref(), &s, 0).unwrap();
    let mut seen = 0;
    for o in rec.outcomes.iter().filter(|o| matches!(o.branch, Branch::DrAccept | Branch::DrReject)) {
        let n2 = (rec.eps0 * o.n1.unwrap() as f64 / o.eps_used).floor() as usize;
        assert_eq!(Some(n2), o.n2);
        seen += 1;
    }
    assert!(seen > 0);
    let counts = rec.branch_counts();
    assert_eq!(counts.values().sum::<usize>(), rec.n_draws());
}

#[test]
fn non_finite_initial_point_is_an_error() {
    let model = model_from_name("std_normal-2").unwrap();
    let mut s = ChainSettings::new(SamplerKind::Atlas, 10, 1);
    s.initial = Some(vec![f64::NAN, 0.0]);
    assert!(run_chain(model.as_ref(), &s, 0).is_err());
    s.initial = Some(vec![0.0]);
    assert!(run_chain(model.as_ref(), &s, 0).is_err());
}
