use nrv_core::losses::{
    cycle_loss, density_multiplier, extended_cycle_loss, hallucination_loss, tile_objective, TileLosses,
};
use nrv_core::phantom::{degenerate, random_tube_specs, rasterize_tubes};
use nrv_core::{DegenerationParams, LossConfig, TileLossBreakdown};
use rand::Rng;

use crate::oracle::{naive_delta, naive_excess, naive_l1, random_sparse, rel_close, rng};
use crate::{ensure, Outcome};

const N: [usize; 3] = [16, 16, 16];

pub fn check() -> Outcome {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    let mut track = |got: f64, want: f64| {
        let rel = (got - want).abs() / want.abs().max(1e-300);
        if want != 0.0 {
            worst = worst.max(rel);
        }
        rel_close(got, want, 1e-6)
    };
    for case in 0..1000 {
        let fg = r.random_range(0.0..0.6);
        let t = r.random_range(0.0f32..0.5);
        let cfg = LossConfig {
            fg_threshold: t,
            lambda_o: r.random_range(0.0..20.0),
            lambda_y: r.random_range(0.0..20.0),
            ..LossConfig::default()
        };
        let o = random_sparse(N, &mut r, fg);
        let fo = random_sparse(N, &mut r, fg);
        let y = random_sparse(N, &mut r, fg);
        let gy = random_sparse(N, &mut r, fg);

        let delta = naive_delta(&o, &fo, t);
        ensure!(track(density_multiplier(&o, &fo, &cfg).unwrap(), delta), "delta, case {case}");
        ensure!(track(cycle_loss(&o, &fo, &cfg).unwrap(), delta * naive_l1(&o, &fo)), "cycle, case {case}");
        let xc = naive_delta(&gy, &y, t) * naive_l1(&gy, &y);
        ensure!(track(extended_cycle_loss(&gy, &y, &cfg).unwrap(), xc), "extended cycle, case {case}");
        let hal = cfg.lambda_y * naive_delta(&gy, &y, t) * naive_excess(&gy, &y)
            + cfg.lambda_o * naive_delta(&fo, &o, t) * naive_excess(&o, &fo);
        let got = hallucination_loss(&o, &fo, &y, &gy, &cfg).unwrap();
        ensure!(track(got, hal), "hallucination, case {case}: {got} vs {hal}");
    }

    let cfg = LossConfig::default();
    let dims = [32, 32, 16];
    let mut pairs = 0;
    for seed in 0..30u64 {
        let specs = random_tube_specs(dims, [1.0; 3], 3, (1.5, 3.0), seed);
        let young = rasterize_tubes(&specs, dims, [1.0; 3]).unwrap();
        let old = degenerate(&young, &specs, &DegenerationParams { seed, ..Default::default() }).unwrap();
        ensure!(old.data().iter().zip(young.data()).all(|(o, y)| o <= y), "phantom pair {seed} not contained");
        let h = hallucination_loss(&old, &young, &young, &old, &cfg).unwrap();
        ensure!(h == 0.0, "hallucination {h} on phantom pair {seed}");
        pairs += 1;
    }

    ensure!(
        (cfg.w1, cfg.w2, cfg.cycle_weight_o, cfg.cycle_weight_y) == (0.25, 0.5, 10.0, 10.0),
        "default weights {:?}",
        (cfg.w1, cfg.w2, cfg.cycle_weight_o, cfg.cycle_weight_y)
    );
    // hand-computed: tile total = gan_o + gan_y + 10 cyc_o + 10 xcyc_y + hallucination
    let zero = TileLossBreakdown::compose(0.0, 0.0, 0.0, 0.0, 0.0, &cfg);
    let c = TileLossBreakdown::compose(0.5, 0.25, 0.125, 0.0625, 2.0, &cfg);
    let q = TileLossBreakdown::compose(1.0, 2.0, 0.5, 0.25, 0.75, &cfg);
    let examples = [
        (TileLosses { top_left: zero, top_right: zero, bottom_left: zero, bottom_right: zero, center: c }, 2.3125),
        (TileLosses { top_left: q, top_right: q, bottom_left: q, bottom_right: q, center: zero }, 11.25),
        (TileLosses { top_left: q, top_right: zero, bottom_left: zero, bottom_right: c, center: c }, 6.28125),
    ];
    for (k, (parts, want)) in examples.iter().enumerate() {
        let got = tile_objective(parts, &cfg);
        ensure!((got - want).abs() <= 1e-9, "objective example {k}: {got} vs {want}");
    }
    for case in 0..1000 {
        let p: Vec<f64> = (0..25).map(|_| r.random_range(0.0..5.0)).collect();
        let b = |k: usize| TileLossBreakdown::compose(p[5 * k], p[5 * k + 1], p[5 * k + 2], p[5 * k + 3], p[5 * k + 4], &cfg);
        let parts = TileLosses { top_left: b(0), top_right: b(1), bottom_left: b(2), bottom_right: b(3), center: b(4) };
        let tile = |k: usize| p[5 * k] + p[5 * k + 1] + 10.0 * p[5 * k + 2] + 10.0 * p[5 * k + 3] + p[5 * k + 4];
        let want = 0.25 * (tile(0) + tile(1) + tile(2) + tile(3)) + 0.5 * tile(4);
        let got = tile_objective(&parts, &cfg);
        ensure!((got - want).abs() <= 1e-9 * want.max(1.0), "objective case {case}: {got} vs {want}");
    }
    Ok(format!(
        "1000 random 16^3 cases, worst relative error {worst:.1e}; hallucination 0 on {pairs} phantom pairs; objective within 1e-9"
    ))
}
