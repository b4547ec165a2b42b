use proptest::prelude::*;

use uvguard_core::abft::{conv_checked, fc_checked, single_layer_checksums};
use uvguard_core::dmr::{dmr_execute, relative_difference};
use uvguard_core::faultsim::{ForcedFault, OpKind, Path, Variant};
use uvguard_core::layers::{ConvLayer, ConvSpec, FcLayer, FcSpec, LayerDesc, NonlinearKind};
use uvguard_core::tensor::{random_tensor, Dist};
use uvguard_core::{
    AbftConfig, DmrConfig, ExecContext, FaultModelParams, OperatingPoint, PowerModel, Scalar, Seed, Tensor,
};

const TAU: f64 = 1e-10;

fn conv_layer(m: usize, ch: usize, r: usize, h: usize, seed: u64) -> (LayerDesc, Tensor) {
    let s = Seed(seed);
    let spec = ConvSpec::new(m, ch, r, 1, h).unwrap();
    let w = random_tensor(&[m, ch, r, r], s.derive(1), Dist::Uniform).unwrap();
    let b = random_tensor(&[m], s.derive(2), Dist::Uniform).unwrap();
    let x = random_tensor(&[ch, h, h], s.derive(3), Dist::Uniform).unwrap();
    (LayerDesc::Conv(ConvLayer::new(spec, w, b).unwrap()), x)
}

fn fc_layer(k: usize, m: usize, seed: u64) -> (LayerDesc, Tensor) {
    let s = Seed(seed);
    let w = random_tensor(&[k, m], s.derive(1), Dist::Normal).unwrap();
    let b = random_tensor(&[m], s.derive(2), Dist::Normal).unwrap();
    let x = random_tensor(&[1, k], s.derive(3), Dist::Normal).unwrap();
    (LayerDesc::Fc(FcLayer::new(FcSpec::new(k, m).unwrap(), w, b).unwrap()), x)
}

fn run_checked(layer: &LayerDesc, x: &Tensor, cfg: &AbftConfig, ctx: &ExecContext) -> bool {
    let cks = single_layer_checksums(layer, 0).unwrap();
    match layer {
        LayerDesc::Conv(c) => conv_checked(x, c, &cks, cfg, ctx).unwrap().1.pass,
        LayerDesc::Fc(f) => fc_checked(x, f, &cks, cfg, ctx).unwrap().1.pass,
        LayerDesc::Nonlinear(_) => unreachable!(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fault_free_conv_passes(m in 1usize..12, ch in 1usize..6, r in 1usize..5, extra in 0usize..12, seed: u64) {
        let (layer, x) = conv_layer(m, ch, r, r + extra, seed);
        let cfg = AbftConfig::F64.with_tau(TAU);
        prop_assert!(run_checked(&layer, &x, &cfg, &ExecContext::fault_free()));
    }

    #[test]
    fn fault_free_fc_passes(k in 1usize..128, m in 1usize..128, seed: u64) {
        let (layer, x) = fc_layer(k, m, seed);
        let cfg = AbftConfig::F64.with_tau(TAU);
        prop_assert!(run_checked(&layer, &x, &cfg, &ExecContext::fault_free()));
    }

    // An exponent flip changes an element by at least its own magnitude, or
    // turns a zero into 2.0.
    #[test]
    fn exponent_flip_in_output_is_caught(m in 2usize..8, ch in 1usize..4, r in 1usize..4, seed: u64, pick: u64) {
        let (layer, x) = conv_layer(m, ch, r, r + 4, seed);
        let n = (m * 25) as u64;
        let forced = [ForcedFault::main(0, pick % n, 62)];
        let ctx = ExecContext::fault_free().with_forced(&forced);
        prop_assert!(!run_checked(&layer, &x, &AbftConfig::F64, &ctx));
    }

    #[test]
    fn fc_exponent_flip_is_caught(k in 1usize..64, m in 2usize..64, seed: u64, pick: u64) {
        let (layer, x) = fc_layer(k, m, seed);
        let forced = [ForcedFault::main(0, pick % m as u64, 62)];
        let ctx = ExecContext::fault_free().with_forced(&forced);
        prop_assert!(!run_checked(&layer, &x, &AbftConfig::F64, &ctx));
    }

    #[test]
    fn dmr_variants_agree_without_faults(len in 1usize..200, seed: u64, spread in 0.1f64..500.0) {
        let x: Tensor = random_tensor(&[1, len], Seed(seed), Dist::Normal).unwrap().scale(spread);
        for kind in [NonlinearKind::Relu, NonlinearKind::Softmax] {
            let (_, v) = dmr_execute(&x, kind, &DmrConfig::default(), &ExecContext::fault_free()).unwrap();
            prop_assert!(v.pass, "{kind:?} discrepancy {}", v.discrepancy);
        }
    }

    #[test]
    fn relative_difference_is_symmetric(a: f64, b: f64) {
        prop_assume!(a.is_finite() && b.is_finite());
        prop_assert_eq!(relative_difference(a, b), relative_difference(b, a));
        prop_assert_eq!(relative_difference(a, a), 0.0);
    }

    #[test]
    fn bit_flips_are_involutions(x: f64, y: f32, bit in 0u32..32) {
        prop_assert_eq!(x.flip_bit(bit).flip_bit(bit).to_bits(), x.to_bits());
        prop_assert_eq!(x.flip_bit(bit + 32).flip_bit(bit + 32).to_bits(), x.to_bits());
        prop_assert_eq!(y.flip_bit(bit).flip_bit(bit).to_bits(), y.to_bits());
    }

    #[test]
    fn fault_probability_rises_as_voltage_falls(hi in 781.0f64..960.0, drop in 0.0f64..180.0) {
        let params = FaultModelParams::default();
        let curve = params.at(1780).unwrap();
        let lo = (hi - drop).max(780.5);
        for path in [Path::Linear, Path::Nonlinear] {
            let (p_hi, p_lo) = (curve.probability_at(hi, path).unwrap(), curve.probability_at(lo, path).unwrap());
            prop_assert!(p_lo >= p_hi);
            if hi >= curve.poff(path) {
                prop_assert_eq!(p_hi, 0.0);
            }
        }
        // nonlinear sites never fault more often than linear ones
        prop_assert!(curve.probability_at(lo, Path::Nonlinear).unwrap() <= curve.probability_at(lo, Path::Linear).unwrap());
    }

    #[test]
    fn power_grows_with_voltage_and_frequency(v in 600.0f64..1199.0, dv in 0.5f64..100.0, f in 1000.0f64..2000.0) {
        let p = PowerModel::default();
        prop_assert!(p.power_at(v + dv, f) > p.power_at(v, f));
        prop_assert!(p.power_at(v, f + 10.0) > p.power_at(v, f));
    }

    #[test]
    fn fault_decisions_are_pure_and_decorrelated(v in 781u32..835, seed: u64, retry in 0u32..4, index: u64) {
        let params = FaultModelParams::default();
        let point = OperatingPoint::new(v, 1780).unwrap();
        let ctx = ExecContext::new(&params, point, seed, retry).unwrap().with_probabilities(0.5, 0.5);
        let again = ExecContext::new(&params, point, seed, retry).unwrap().with_probabilities(0.5, 0.5);
        for op in [OpKind::Main, OpKind::Check, OpKind::Nonlinear] {
            let a = ctx.site(op, Variant::A, index);
            prop_assert_eq!(ctx.decide::<f64>(a), again.decide::<f64>(a));
            if let Some(bit) = ctx.decide::<f64>(a) {
                prop_assert!((20..=51).contains(&bit));
            }
        }
        let (a, b) = (ctx.site(OpKind::Nonlinear, Variant::A, index), ctx.site(OpKind::Nonlinear, Variant::B, index));
        prop_assert!(ctx.decide::<f64>(a).is_none() || ctx.decide::<f64>(b).is_none());
    }
}

#[test]
fn crash_voltage_refuses_to_run() {
    let params = FaultModelParams::default();
    for (f, crash) in [(1820, 795), (1780, 780), (1680, 745)] {
        let point = OperatingPoint::new(crash, f).unwrap();
        assert!(ExecContext::new(&params, point, 1, 0).is_err());
        assert!(ExecContext::new(&params, point.with_voltage(crash + 5), 1, 0).is_ok());
    }
}
