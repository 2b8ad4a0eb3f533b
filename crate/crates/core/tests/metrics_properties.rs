use proptest::prelude::*;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgfcn::fixmap::quantize_map;
use sgfcn::metrics::{cc, emd, nss, pr_roc_curves, rank_auc, shuffled_auc, sim, FixationSet};
use sgfcn::ScalarField;

fn pairwise_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for p in pos {
        for n in neg {
            wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

fn field_strategy(h: usize, w: usize) -> impl Strategy<Value = ScalarField> {
    proptest::collection::vec(0.0f64..1.0, h * w).prop_map(move |v| ScalarField::from_vec(h, w, v).unwrap())
}

fn positive_field(h: usize, w: usize) -> impl Strategy<Value = ScalarField> {
    proptest::collection::vec(0.01f64..1.0, h * w).prop_map(move |v| ScalarField::from_vec(h, w, v).unwrap())
}

fn points(h: usize, w: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<(usize, usize)>> {
    proptest::collection::vec((0..h, 0..w), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sauc_matches_pairwise(pred in field_strategy(6, 6), pos in points(6, 6, 1..12), neg in points(6, 6, 1..30), coarse in any::<bool>()) {
        // coarse values create many ties
        let pred = if coarse { pred.map(|v| (v * 4.0).floor()) } else { pred };
        let fx = FixationSet { frame_index: 0, points: pos.clone() };
        let got = shuffled_auc(&pred, &fx, &neg).unwrap();
        let pv: Vec<f64> = pos.iter().map(|&(r, c)| pred.get(r, c)).collect();
        let nv: Vec<f64> = neg.iter().map(|&(r, c)| pred.get(r, c)).collect();
        prop_assert!((got - pairwise_auc(&pv, &nv)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn sauc_rank_invariance(pred in field_strategy(5, 5), pos in points(5, 5, 1..8), neg in points(5, 5, 1..20)) {
        let fx = FixationSet { frame_index: 0, points: pos };
        let a = shuffled_auc(&pred, &fx, &neg).unwrap();
        let b = shuffled_auc(&pred.map(|v| (3.0 * v).exp() + 1.0), &fx, &neg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn sauc_negation_complements(pos in proptest::collection::vec(0.0f64..1.0, 1..10), neg in proptest::collection::vec(0.0f64..1.0, 1..10)) {
        let a = rank_auc(&pos, &neg).unwrap();
        let flip = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let b = rank_auc(&flip(&pos), &flip(&neg)).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nss_affine_invariance(pred in field_strategy(5, 5), pos in points(5, 5, 1..6), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let fx = FixationSet { frame_index: 0, points: pos };
        let x = nss(&pred, &fx).unwrap();
        let y = nss(&pred.map(|v| a * v + b), &fx).unwrap();
        prop_assert!((x - y).abs() < 1e-9);
    }

    #[test]
    fn cc_matches_textbook(p in field_strategy(4, 4), g in field_strategy(4, 4), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let n = 16.0;
        let (sp, sg) = (p.values().iter().sum::<f64>(), g.values().iter().sum::<f64>());
        let spp: f64 = p.values().iter().map(|x| x * x).sum();
        let sgg: f64 = g.values().iter().map(|x| x * x).sum();
        let spg: f64 = p.values().iter().zip(g.values()).map(|(x, y)| x * y).sum();
        let want = (n * spg - sp * sg) / ((n * spp - sp * sp).sqrt() * (n * sgg - sg * sg).sqrt());
        let got = cc(&p, &g).unwrap();
        prop_assert!((got - want).abs() < 1e-12);
        prop_assert!((cc(&p.map(|v| a * v + b), &g).unwrap() - got).abs() < 1e-9);
    }

    #[test]
    fn sim_matches_accumulation(p in positive_field(4, 4), g in positive_field(4, 4), k in 0.1f64..10.0) {
        let (sp, sg) = (p.sum(), g.sum());
        let mut want = 0.0;
        for i in 0..16 {
            want += (p.values()[i] / sp).min(g.values()[i] / sg);
        }
        let got = sim(&p, &g).unwrap();
        prop_assert!((got - want).abs() < 1e-12);
        prop_assert!((sim(&p.map(|v| k * v), &g).unwrap() - got).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn emd_metric_axioms(a in positive_field(4, 4), b in positive_field(4, 4), c in positive_field(4, 4), k in 0.1f64..10.0) {
        let ab = emd(&a, &b, 4).unwrap();
        let ba = emd(&b, &a, 4).unwrap();
        let bc = emd(&b, &c, 4).unwrap();
        let ac = emd(&a, &c, 4).unwrap();
        prop_assert!((ab - ba).abs() < 1e-10, "symmetry {} {}", ab, ba);
        prop_assert!(ac <= ab + bc + 1e-10, "triangle {} > {} + {}", ac, ab, bc);
        prop_assert!(emd(&a, &a, 4).unwrap().abs() < 1e-12);
        prop_assert!((emd(&a.map(|v| k * v), &b, 4).unwrap() - ab).abs() < 1e-10);
    }

    #[test]
    fn curves_match_counting(pred in field_strategy(8, 8), gtv in proptest::collection::vec(any::<bool>(), 64)) {
        prop_assume!(gtv.iter().any(|&g| g) && gtv.iter().any(|&g| !g));
        let bytes = quantize_map(&pred);
        let c = pr_roc_curves(&bytes, &gtv).unwrap();
        let fg = gtv.iter().filter(|&&g| g).count() as f64;
        let bg = 64.0 - fg;
        for t in 0..256usize {
            let (mut tp, mut fp) = (0.0, 0.0);
            for i in 0..64 {
                if bytes[i] as usize >= t {
                    if gtv[i] { tp += 1.0 } else { fp += 1.0 }
                }
            }
            let p = &c.points[t];
            prop_assert_eq!(p.threshold as usize, t);
            prop_assert_eq!(p.tpr, tp / fg);
            prop_assert_eq!(p.fpr, fp / bg);
            prop_assert_eq!(p.precision, if tp + fp == 0.0 { 1.0 } else { tp / (tp + fp) });
        }
        for w in c.points.windows(2) {
            prop_assert!(w[1].tpr <= w[0].tpr && w[1].fpr <= w[0].fpr);
        }
        // trapezoid over every integer threshold equals the rank statistic
        let pos: Vec<f64> = (0..64).filter(|&i| gtv[i]).map(|i| bytes[i] as f64).collect();
        let neg: Vec<f64> = (0..64).filter(|&i| !gtv[i]).map(|i| bytes[i] as f64).collect();
        prop_assert!((c.roc_auc() - rank_auc(&pos, &neg).unwrap()).abs() <= 1.0 / 510.0);
    }
}

#[test]
fn sauc_fifty_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for _ in 0..50 {
        let pos: Vec<f64> = (0..rng.random_range(1..40)).map(|_| (rng.random_range(0.0..1.0f64) * 20.0).round()).collect();
        let neg: Vec<f64> = (0..rng.random_range(1..200)).map(|_| (rng.random_range(0.0..1.0f64) * 20.0).round()).collect();
        assert!((rank_auc(&pos, &neg).unwrap() - pairwise_auc(&pos, &neg)).abs() < 1e-12);
    }
}
