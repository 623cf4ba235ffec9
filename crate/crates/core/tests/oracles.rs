//! Library results against independent brute-force computations.

mod common;

use common::*;
use rand::Rng;

use segbench::ensemble::{argmax_labels, average_probs, majority_vote, VoteConfig};
use segbench::losses::{self, default_matrix, gwdl_loss_and_grad_raw, gwdl_score_raw, wasserstein_pointwise, OneHotGt};
use segbench::metrics::{self, evaluate_case, surface, EvalOptions, MetricValue};
use segbench::report::{run_manifest, BoxplotSeries, RunOptions};
use segbench::stats::{bootstrap_ci, bootstrap_superiority, Direction, PairedScores};
use segbench::volume::{keep_k_largest_components, Connectivity};
use segbench::{BinaryMask, EvalClass, LabelVolume, ProbVolume, RawClass, Spacing, Task, Taxonomy};

const EPS: f64 = 1e-9;

#[test]
fn edt_matches_all_pairs_search() {
    let mut r = rng(1);
    for _ in 0..40 {
        let dims = random_dims(&mut r, 8);
        let s = random_spacing(&mut r);
        let m = random_mask(&mut r, dims, s);
        if m.is_all_background() {
            assert!(metrics::edt(&m).is_err());
            continue;
        }
        let got = metrics::edt(&m).unwrap();
        for (a, b) in got.data().iter().zip(brute_edt(&m)) {
            assert!((a - b).abs() < EPS, "{a} vs {b}");
        }
    }
}

#[test]
fn cube_shell_enumeration() {
    let cube = BinaryMask::filled([3, 3, 3], Spacing::default(), true).unwrap();
    let s = surface(&cube);
    assert_eq!(s.count(), 26);
    assert_eq!(brute_surface(&cube).len(), 26);
    assert!(!*s.get(1, 1, 1));
}

#[test]
fn surface_metrics_match_all_pairs() {
    let mut r = rng(2);
    for _ in 0..60 {
        let dims = [8, 8, 8];
        let s = random_spacing(&mut r);
        let (a, b) = (random_mask(&mut r, dims, s), random_mask(&mut r, dims, s));
        let o = oracle_metrics(&a, &b);
        let (h, asd) = metrics::hd95_asd(&a, &b).unwrap();
        assert!((h.value().unwrap() - o.hd95).abs() < EPS);
        assert!((asd.value().unwrap() - o.asd).abs() < EPS);
        assert_eq!(metrics::dice(&a, &b).unwrap().value(), o.dsc);
        assert_eq!(metrics::avd(&a, &b).unwrap().value(), Some(o.avd));
    }
}

#[test]
fn components_keep_two_largest() {
    let dims = [30, 12, 12];
    let mut data = vec![false; dims.iter().product()];
    // 100 = 5x5x4, 90 = 5x6x3, 3 = 3x1x1, separated by empty slabs.
    let mut blobs: Vec<Vec<usize>> = Vec::new();
    for (x0, sx, sy, sz) in [(0, 5, 5, 4), (8, 5, 6, 3), (16, 3, 1, 1)] {
        let mut b = Vec::new();
        for z in 0..sz {
            for y in 0..sy {
                for x in x0..x0 + sx {
                    b.push(idx(dims, x, y, z));
                }
            }
        }
        blobs.push(b);
    }
    for b in &blobs {
        for &i in b {
            data[i] = true;
        }
    }
    assert_eq!(blobs.iter().map(Vec::len).collect::<Vec<_>>(), [100, 90, 3]);
    let m = BinaryMask::new(dims, Spacing::default(), data).unwrap();
    for conn in [Connectivity::Six, Connectivity::TwentySix] {
        let kept = keep_k_largest_components(&m, 2, conn).unwrap();
        assert_eq!(kept.count(), 190);
        assert!(blobs[0].iter().chain(&blobs[1]).all(|&i| kept.data()[i]));
        assert!(blobs[2].iter().all(|&i| !kept.data()[i]));
    }
}

fn uniform_labels(dims: [usize; 3], l: u8) -> LabelVolume {
    LabelVolume::filled(dims, Spacing::default(), l).unwrap()
}

#[test]
fn taxonomy_groupings() {
    let t = Taxonomy::default();
    let lo = uniform_labels([3, 3, 3], RawClass::LinearOpacity.default_id());
    assert_eq!(t.project(&lo, EvalClass::Con).unwrap().count(), 27);
    let mut half: Vec<u8> = vec![RawClass::Combined.default_id(); 27];
    for v in half.iter_mut().take(13) {
        *v = RawClass::Rhs.default_id();
    }
    let half = LabelVolume::new([3, 3, 3], Spacing::default(), half).unwrap();
    assert_eq!(t.project(&half, EvalClass::Com).unwrap().count(), 27);
}

#[test]
fn sensitivity_not_applicable_without_lesion() {
    let t = Taxonomy::default();
    let lung = uniform_labels([4, 4, 4], 1);
    let rows = evaluate_case(&lung, &lung, &t, Task::Lung, EvalOptions::default()).unwrap();
    assert_eq!(rows[0].dsc, MetricValue::Value(1.0));
    for r in &rows[1..] {
        assert_eq!(r.sen, MetricValue::NotApplicable);
    }
}

#[test]
fn com_only_ground_truth_empties_multiclass_domain() {
    let t = Taxonomy::default();
    let dims = [6, 6, 6];
    let gt = uniform_labels(dims, RawClass::Combined.default_id());
    let pred = uniform_labels(dims, RawClass::Ggo.default_id());
    let rows = evaluate_case(&gt, &pred, &t, Task::Multiclass, EvalOptions::default()).unwrap();
    // After ignoring COM both sides are empty: DSC is not applicable and
    // the fill rule compares two full grids.
    for r in &rows {
        assert_eq!(r.dsc, MetricValue::NotApplicable, "{:?}", r.class);
        assert_eq!(r.hd95, MetricValue::Value(0.0));
        assert_eq!(r.avd, MetricValue::Value(0.0));
    }
}

#[test]
fn per_class_composition_on_12_cube() {
    let dims = [12, 12, 12];
    let s = Spacing::new(0.8, 1.1, 2.0).unwrap();
    let mut r = rng(3);
    let pick = [0u8, 1, 2, 3, 4, 5, 6, 7, 8];
    let gt_data: Vec<u8> = (0..1728).map(|_| pick[r.random_range(0..9)]).collect();
    let pred_data: Vec<u8> = gt_data.iter().map(|&l| if r.random_bool(0.3) { pick[r.random_range(0..9)] } else { l }).collect();
    let gt = LabelVolume::new(dims, s, gt_data.clone()).unwrap();
    let pred = LabelVolume::new(dims, s, pred_data.clone()).unwrap();
    let rows = evaluate_case(&gt, &pred, &Taxonomy::default(), Task::Multiclass, EvalOptions::default()).unwrap();

    let com = |l: u8| l == 6 || l == 7;
    let class_mask = |data: &[u8], members: &[u8]| {
        let d = data.iter().zip(&gt_data).map(|(l, g)| members.contains(l) && !com(*g)).collect();
        BinaryMask::new(dims, s, d).unwrap()
    };
    let groups: [(EvalClass, &[u8]); 4] = [
        (EvalClass::Con, &[3, 5]),
        (EvalClass::Cpp, &[4]),
        (EvalClass::Ggo, &[2]),
        (EvalClass::GgoPlusCpp, &[2, 4]),
    ];
    let mut per = Vec::new();
    for (cls, members) in groups {
        let o = oracle_metrics(&class_mask(&pred_data, members), &class_mask(&gt_data, members));
        let row = rows.iter().find(|m| m.class == cls).unwrap();
        assert_eq!(row.dsc.value(), o.dsc);
        assert!((row.hd95.value().unwrap() - o.hd95).abs() < EPS);
        assert!((row.asd.value().unwrap() - o.asd).abs() < EPS);
        assert_eq!(row.avd.value(), Some(o.avd));
        if cls != EvalClass::GgoPlusCpp {
            per.push(o);
        }
    }
    let mean = rows.iter().find(|m| m.class == EvalClass::Mean).unwrap();
    let dsc_mean = per.iter().map(|o| o.dsc.unwrap()).sum::<f64>() / 3.0;
    assert!((mean.dsc.value().unwrap() - dsc_mean).abs() < 1e-12);
}

#[test]
fn averaged_rows_stay_normalized() {
    let mut r = rng(4);
    let (dims, c) = ([6, 5, 4], 4);
    let inputs: Vec<ProbVolume> = (0..5)
        .map(|_| {
            let mut d = Vec::new();
            for _ in 0..120 {
                let raw: Vec<f64> = (0..c).map(|_| r.random_range(0.01..1.0)).collect();
                let s: f64 = raw.iter().sum();
                d.extend(raw.iter().map(|x| x / s));
            }
            ProbVolume::new(dims, Spacing::default(), c, d).unwrap()
        })
        .collect();
    let avg = average_probs(&inputs).unwrap();
    assert!(avg.is_normalized());
    for row in avg.rows() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn argmax_matches_scan() {
    let mut r = rng(5);
    let ids = [0u8, 2, 3, 4];
    let data: Vec<f64> = (0..512 * 4).map(|_| r.random_range(0.0..1.0)).collect();
    let p = ProbVolume::new([8, 8, 8], Spacing::default(), 4, data.clone()).unwrap();
    let got = argmax_labels(&p, &ids).unwrap();
    for (i, row) in data.chunks(4).enumerate() {
        let mut best = 0;
        for c in 0..4 {
            if row[c] > row[best] {
                best = c;
            }
        }
        assert_eq!(got.data()[i], ids[best]);
    }
    let uniform = ProbVolume::new([2, 1, 1], Spacing::default(), 4, vec![0.25; 8]).unwrap();
    assert_eq!(argmax_labels(&uniform, &ids).unwrap().data(), &[0, 0]);
}

#[test]
fn vote_matches_counting() {
    let mut r = rng(6);
    for _ in 0..20 {
        let k = r.random_range(3..=7);
        let preds: Vec<LabelVolume> = (0..k)
            .map(|_| LabelVolume::new([8, 8, 8], Spacing::default(), (0..512).map(|_| r.random_range(0..4)).collect()).unwrap())
            .collect();
        let got = majority_vote(&preds, VoteConfig { seed: 9 }).unwrap();
        for i in 0..512 {
            let col: Vec<u8> = preds.iter().map(|p| p.data()[i]).collect();
            assert!(vote_winners(&col).contains(&got.data()[i]));
        }
    }
}

#[test]
fn distance_matrix_entries() {
    let m = default_matrix();
    let i = |n: &str| m.index_of(n).unwrap();
    assert_eq!(m.get(i("GGO"), i("CON")), 0.8);
    assert_eq!(m.get(i("COM"), i("GGO")), 0.0);
    assert_eq!(m.get(i("background"), i("healthy_lung")), 1.0);
    assert_eq!(m.get(i("background"), i("OAT")), 0.0);
}

#[test]
fn pointwise_distance_examples() {
    let m = default_matrix();
    let mut p = [0.0; 7];
    p[1] = 0.5;
    p[2] = 0.5;
    assert!((wasserstein_pointwise(&p, 1, &m).unwrap() - 0.4).abs() < 1e-15);
    let mut r = rng(7);
    for _ in 0..100 {
        // Mass on GGO, CON, CPP, COM, OAT only.
        let mut q = [0.0; 7];
        for v in q.iter_mut().take(6).skip(1) {
            *v = r.random_range(0.0..1.0);
        }
        let s: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= s);
        assert!(wasserstein_pointwise(&q, 4, &m).unwrap().abs() < 1e-12);
    }
}

#[test]
fn two_voxel_hand_evaluation() {
    let m = default_matrix();
    let mut probs = vec![0.0; 14];
    probs[1] = 1.0;
    probs[7..].iter_mut().for_each(|v| *v = 1.0 / 7.0);
    let gt = OneHotGt::new(vec![1, 2], 7).unwrap();
    // Voxel 1 (GGO, exact): W = 0. Voxel 2 (CON, uniform): W = (1 + .8 + 0 + .8 + 0 + 0 + 1) / 7 = 3.6 / 7.
    // Both classes occur once, so a = 1/2 for both voxels.
    let w2 = 3.6 / 7.0;
    let a = 0.5 * (1.0 - 0.0) + 0.5 * (1.0 - w2);
    let b = 0.5 * (2.0 - 0.0) + 0.5 * (2.0 - w2);
    let expected = 2.0 * a / b;
    assert!((gwdl_score_raw(&probs, &gt, &m).unwrap() - expected).abs() < 1e-14);
    let rows: Vec<Vec<f64>> = (0..7).map(|i| m.row(i).to_vec()).collect();
    assert!((1.0 - gwdl_loss_oracle(&probs, &[1, 2], &rows) - expected).abs() < 1e-14);
}

fn random_simplex(r: &mut rand_chacha::ChaCha8Rng, l: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..l).map(|_| r.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

#[test]
fn gradient_matches_finite_differences_small() {
    let m = default_matrix();
    let rows: Vec<Vec<f64>> = (0..7).map(|i| m.row(i).to_vec()).collect();
    let mut r = rng(8);
    for _ in 0..20 {
        let gt: Vec<usize> = (0..4).map(|_| r.random_range(0..7)).collect();
        let probs: Vec<f64> = (0..4).flat_map(|_| random_simplex(&mut r, 7)).collect();
        let oh = OneHotGt::new(gt.clone(), 7).unwrap();
        let (loss, grad) = gwdl_loss_and_grad_raw(&probs, &oh, &m).unwrap();
        assert!((loss - gwdl_loss_oracle(&probs, &gt, &rows)).abs() < 1e-12);
        for j in 0..probs.len() {
            let h = 1e-5;
            let (mut up, mut dn) = (probs.clone(), probs.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (gwdl_loss_oracle(&up, &gt, &rows) - gwdl_loss_oracle(&dn, &gt, &rows)) / (2.0 * h);
            let scale = grad[j].abs().max(fd.abs());
            assert!((grad[j] - fd).abs() <= 1e-4 * scale + 1e-12, "{} vs {fd}", grad[j]);
        }
    }
}

#[test]
fn all_com_ground_truth_is_free() {
    let m = default_matrix();
    let mut r = rng(9);
    let mut probs = Vec::new();
    for _ in 0..6 {
        let mut q = vec![0.0; 7];
        let lesion = random_simplex(&mut r, 5);
        q[1..6].copy_from_slice(&lesion);
        probs.extend(q);
    }
    let gt = OneHotGt::new(vec![4; 6], 7).unwrap();
    let (loss, grad) = gwdl_loss_and_grad_raw(&probs, &gt, &m).unwrap();
    assert!(loss.abs() < 1e-15);
    for i in 0..6 {
        for c in 1..=5 {
            assert_eq!(grad[i * 7 + c], 0.0);
        }
    }
    assert_eq!(losses::alpha_weights(&gt, 7).0[4], 1.0 / 7.0);
}

#[test]
fn dominance_gives_minimal_p() {
    let a: Vec<f64> = (0..20).map(|i| 0.5 + 0.01 * i as f64).collect();
    let b: Vec<f64> = a.iter().map(|x| x - 0.2).collect();
    let ps = PairedScores::from_values(&a, &b).unwrap();
    for n in [1000, 2000, 5000] {
        let t = bootstrap_superiority(&ps, n, 11, Direction::HigherBetter).unwrap();
        assert_eq!(t.p_value, 1.0 / (n + 1) as f64);
        assert!(t.significant);
    }
}

/// Second, deliberately plain percentile bootstrap with an unrelated
/// generator.
fn reference_ci(scores: &[f64], n: usize, level: f64) -> (f64, f64) {
    use rand::rngs::StdRng;
    use rand::SeedableRng;
    let mut r = StdRng::seed_from_u64(12345);
    let m = scores.len();
    let mut means: Vec<f64> = (0..n)
        .map(|_| (0..m).map(|_| scores[r.random_range(0..m)]).sum::<f64>() / m as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0 * 100.0;
    (sorted_percentile(&means, tail), sorted_percentile(&means, 100.0 - tail))
}

#[test]
fn ci_matches_reference_implementation() {
    let mut r = rng(10);
    let scores: Vec<f64> = (0..30).map(|_| r.random_range(0.0..1.0)).collect();
    let mean = scores.iter().sum::<f64>() / 30.0;
    let (lo, hi) = bootstrap_ci(&scores, 10_000, 3, 0.95).unwrap();
    assert!(lo < mean && mean < hi);
    let (rlo, rhi) = reference_ci(&scores, 10_000, 0.95);
    assert!((lo - rlo).abs() < 0.01 && (hi - rhi).abs() < 0.01, "({lo}, {hi}) vs ({rlo}, {rhi})");
}

#[test]
fn boxplot_quartiles_match_sort() {
    let mut r = rng(11);
    let vols: Vec<f64> = (0..20).map(|i| if i % 5 == 0 { 0.0 } else { r.random_range(0.5..300.0) }).collect();
    let s = BoxplotSeries::from_case_volumes("GGO", &vols);
    let present: Vec<f64> = vols.iter().copied().filter(|&v| v > 0.0).collect();
    assert_eq!(s.n_present, 16);
    assert_eq!(s.n_total, 20);
    assert_eq!(s.q1.unwrap(), sorted_percentile(&present, 25.0));
    assert_eq!(s.median.unwrap(), sorted_percentile(&present, 50.0));
    assert_eq!(s.q3.unwrap(), sorted_percentile(&present, 75.0));
}

#[test]
fn manifest_two_cases_two_methods() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for c in 0..2 {
        let gt = synthetic_gt(c);
        write_labels(&d.join(format!("g{c}.nii")), gt.clone());
        write_labels(&d.join(format!("a{c}.nii")), noisy_prediction(&gt, 0.05, c as u64));
        write_labels(&d.join(format!("b{c}.nii")), noisy_prediction(&gt, 0.1, 10 + c as u64));
    }
    let case = |c: usize, b: &str| {
        format!(
            r#"{{"id": "c{c}", "gt": "g{c}.nii", "tasks": ["lung", "mc"],
                "predictions": [{{"method": "A", "labels": "a{c}.nii"}}, {{"method": "B", "labels": "{b}"}}]}}"#
        )
    };
    std::fs::write(
        d.join("m.json"),
        format!(r#"{{"schema": 1, "bootstrap": {{"n": 1000}}, "cases": [{}, {}]}}"#, case(0, "b0.nii"), case(1, "b1.nii")),
    )
    .unwrap();
    let out = d.join("out");
    let rep = run_manifest(d.join("m.json"), &RunOptions { out_dir: out.clone(), ..Default::default() }).unwrap();
    assert!(rep.success());
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "per_case.csv",
            "summary_lung.csv",
            "summary_mc.csv",
            "table_lung.csv",
            "table_lung_ci_hi.csv",
            "table_lung_ci_lo.csv",
            "table_mc.csv",
            "table_mc_ci_hi.csv",
            "table_mc_ci_lo.csv"
        ]
    );

    // A missing prediction fails only its own case.
    std::fs::write(
        d.join("m2.json"),
        format!(r#"{{"schema": 1, "bootstrap": {{"n": 1000}}, "cases": [{}, {}]}}"#, case(0, "b0.nii"), case(1, "nope.nii")),
    )
    .unwrap();
    let rep = run_manifest(d.join("m2.json"), &RunOptions { out_dir: d.join("out2"), ..Default::default() }).unwrap();
    assert_eq!(rep.failures.len(), 1);
    assert_eq!(rep.failures[0].0, "c1");
    let per_case = std::fs::read_to_string(d.join("out2/per_case.csv")).unwrap();
    assert!(per_case.contains("\nc0,A,") && !per_case.contains("\nc1,"));
}

#[test]
fn manifest_majority_vote_column() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_fixture(dir.path(), 3);
    let out = dir.path().join("out");
    run_manifest(&manifest, &RunOptions { out_dir: out.clone(), ..Default::default() }).unwrap();
    for task in ["lung", "bin", "mc"] {
        let t = std::fs::read_to_string(out.join(format!("table_{task}.csv"))).unwrap();
        assert_eq!(t.lines().next().unwrap(), "block,row,A,B,C,MAJ");
    }
}
