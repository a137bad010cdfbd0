use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Operating points by direct counting at every distinct score and `+inf`.
fn brute_points(s: &ScoreSet) -> Vec<(f64, f64, f64)> {
    let mut thr: Vec<f64> = s.target.iter().chain(&s.nontarget).copied().collect();
    thr.sort_by(f64::total_cmp);
    thr.dedup();
    thr.push(f64::INFINITY);
    thr.iter()
        .map(|&t| {
            let far = s.nontarget.iter().filter(|&&v| v >= t).count() as f64 / s.nontarget.len() as f64;
            let frr = s.target.iter().filter(|&&v| v < t).count() as f64 / s.target.len() as f64;
            (t, far, frr)
        })
        .collect()
}

fn brute_eer(s: &ScoreSet) -> f64 {
    let p = brute_points(s);
    for w in p.windows(2) {
        let (da, db) = (w[0].2 - w[0].1, w[1].2 - w[1].1);
        if da == 0.0 {
            return w[0].1;
        }
        if da < 0.0 && db >= 0.0 {
            // intersect the two segments FAR(s) and FRR(s), s in [0, 1]
            let s = da / (da - db);
            return w[0].1 + s * (w[1].1 - w[0].1);
        }
    }
    p.last().unwrap().1
}

fn brute_dcf(s: &ScoreSet, c: &DcfParams) -> f64 {
    brute_points(s)
        .iter()
        .map(|&(_, far, frr)| c.c_frr * c.p_target * frr + c.c_far * (1.0 - c.p_target) * far)
        .fold(f64::INFINITY, f64::min)
}

fn set(t: &[f64], n: &[f64]) -> ScoreSet {
    ScoreSet::new(t.to_vec(), n.to_vec()).unwrap()
}

#[test]
fn eer_worked_examples() {
    let s = set(&[5.0, 4.0, 3.0], &[3.5, 1.0, 0.0]);
    assert!((compute_eer(&s).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(compute_eer(&set(&[3.0, 4.0], &[1.0, 2.0])).unwrap(), 0.0);
    assert_eq!(compute_eer(&set(&[1.0, 2.0], &[3.0, 4.0])).unwrap(), 1.0);
    assert!(compute_eer(&set(&[1.0], &[])).is_err());
    assert!(ScoreSet::new(vec![f64::NAN], vec![0.0]).is_err());
}

#[test]
fn probit_against_integrated_normal_cdf() {
    assert_eq!(probit(0.5), 0.0);
    assert!((probit(0.0228) + 2.0).abs() < 0.01);
    // Simpson integration of the standard normal density from 0 to x
    let cdf = |x: f64| {
        let n = 20_000;
        let h = x / n as f64;
        let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut acc = f(0.0) + f(x);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        0.5 + acc * h / 3.0
    };
    for i in -16..=16 {
        let x = i as f64 * 0.25;
        assert!((probit(cdf(x)) - x).abs() < 1e-7, "x={x}");
    }
    assert_eq!(probit(0.0), probit(1e-6));
    assert_eq!(probit(1.0), probit(1.0 - 1e-6));
}

#[test]
fn det_has_one_point_per_distinct_score_plus_one() {
    let s = set(&[1.0, 2.0, 2.0, 5.0], &[0.0, 2.0, 3.0]);
    let det = compute_det(&s).unwrap();
    assert_eq!(det.len(), 5 + 1);
    assert_eq!((det[0].far, det[0].frr), (1.0, 0.0));
    assert_eq!((det[5].far, det[5].frr), (0.0, 1.0));
    let csv = det_csv(&det);
    assert!(csv.starts_with("far,frr,probit_far,probit_frr\n"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn dcf_examples() {
    let even = DcfParams { c_frr: 1.0, c_far: 1.0, p_target: 0.5 };
    let s = set(&[5.0, 4.0, 3.0], &[3.5, 1.0, 0.0]);
    let (min, _) = compute_dcf(&s, &even).unwrap();
    assert!(min <= compute_eer(&s).unwrap());
    assert_eq!(compute_dcf(&set(&[3.0, 4.0], &[1.0, 2.0]), &even).unwrap(), (0.0, 3.0));
    let tiny = set(&[0.9, 0.2], &[0.5, 0.1]);
    let p = DcfParams { c_frr: 10.0, c_far: 1.0, p_target: 0.3 };
    assert_eq!(compute_dcf(&tiny, &p).unwrap().0, brute_dcf(&tiny, &p));
    assert!(compute_dcf(&tiny, &DcfParams { p_target: 1.0, ..p }).is_err());
}

fn score_sets() -> impl Strategy<Value = ScoreSet> {
    (1usize..100, 1usize..100, any::<u64>()).prop_map(|(nt, nn, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // a coarse grid forces ties between and within classes
        let mut draw = |shift: i32| (rng.gen_range(-40..40) + shift) as f64 / 8.0;
        let t = (0..nt).map(|_| draw(10)).collect();
        let n = (0..nn).map(|_| draw(0)).collect();
        ScoreSet::new(t, n).unwrap()
    })
}

proptest! {
    #[test]
    fn eer_and_dcf_match_enumeration(s in score_sets(), pt in 0.01f64..0.99, cf in 0.1f64..10.0) {
        let eer = compute_eer(&s).unwrap();
        prop_assert!((eer - brute_eer(&s)).abs() < 1e-12);
        let p = DcfParams { c_frr: cf, c_far: 1.0, p_target: pt };
        prop_assert!((compute_dcf(&s, &p).unwrap().0 - brute_dcf(&s, &p)).abs() < 1e-12);
        let pts = sweep(&s).unwrap();
        for w in pts.windows(2) {
            prop_assert!(w[1].far <= w[0].far && w[1].frr >= w[0].frr);
        }
    }

    #[test]
    fn eer_invariant_under_monotone_maps(s in score_sets(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let maps: [&dyn Fn(f64) -> f64; 3] = [&|x| a * x + b, &|x| (x / 4.0).exp(), &|x| x.powi(3) + x];
        let eer = compute_eer(&s).unwrap();
        for f in maps {
            let m = ScoreSet::new(s.target.iter().map(|&x| f(x)).collect(), s.nontarget.iter().map(|&x| f(x)).collect()).unwrap();
            prop_assert_eq!(compute_eer(&m).unwrap(), eer);
        }
    }
}

fn utt(id: &str) -> UttLabel {
    UttLabel::from_id(id).unwrap()
}

#[test]
fn utterance_id_parsing() {
    assert_eq!(parse_utt_id("1320-122612-0000"), Some(("1320", "122612", "0000")));
    assert_eq!(parse_utt_id("1320-122612"), None);
    assert_eq!(parse_utt_id("a-b-c-d"), None);
    assert!(UttLabel::from_id("x y-1-2").is_err());
}

#[test]
fn protocol_one_cross_product() {
    let utts: Vec<UttLabel> = ["1-10-0", "1-10-1", "2-20-0", "2-20-1"].map(utt).to_vec();
    let mut balanced = 0;
    for seed in 0..20 {
        let l = generate_trials(&utts, Protocol::One, seed).unwrap();
        assert_eq!(l.len(), 4);
        let enroll: Vec<&str> = l.trials.iter().map(|t| t.enroll.as_str()).collect();
        let spk: std::collections::BTreeSet<&str> = enroll.iter().map(|e| &e[..1]).collect();
        if spk.len() == 2 {
            assert_eq!(l.targets(), 2);
            balanced += 1;
        }
        for t in &l.trials {
            assert_eq!(t.target, t.enroll[..1] == t.test[..1]);
        }
    }
    assert!(balanced > 0);
    assert_eq!(generate_trials(&utts, Protocol::One, 3).unwrap(), generate_trials(&utts, Protocol::One, 3).unwrap());
}

#[test]
fn protocol_two_separates_chapters() {
    let mut utts = Vec::new();
    for s in 1..=4 {
        for c in 0..3 {
            for g in 0..3 {
                utts.push(utt(&format!("{s}-{s}{c}-{g}")));
            }
        }
    }
    let l = generate_trials(&utts, Protocol::Two, 9).unwrap();
    assert!(l.targets() > 0);
    let label = |id: &str| utt(id);
    for t in &l.trials {
        let (e, x) = (label(&t.enroll), label(&t.test));
        assert!(!(e.speaker == x.speaker && e.chapter == x.chapter));
    }

    let single: Vec<UttLabel> = ["1-10-0", "1-10-1", "2-20-0", "2-20-1", "3-30-0"].map(utt).to_vec();
    let l = generate_trials(&single, Protocol::Two, 1).unwrap();
    assert_eq!(l.targets(), 0);
    assert!(!l.is_empty());
}

#[test]
fn trial_and_score_text_round_trip() {
    let utts: Vec<UttLabel> = ["1-10-0", "1-11-1", "2-20-0", "2-21-1", "3-30-0", "3-31-0"].map(utt).to_vec();
    let l = generate_trials(&utts, Protocol::One, 4).unwrap();
    let text = write_trials(&l);
    assert_eq!(text.lines().count(), l.len());
    assert_eq!(parse_trials(&text, Protocol::One).unwrap(), l);
    assert!(text.lines().all(|x| x.ends_with(" target") || x.ends_with(" nontarget")));
    let scores: Vec<f64> = (0..l.len()).map(|i| i as f64 / 3.0).collect();
    let back = read_scores(&write_scores(&l.trials, &scores)).unwrap();
    assert_eq!(back.iter().map(|x| x.2).collect::<Vec<_>>(), scores);
    assert!(parse_trials("a b maybe\n", Protocol::One).is_err());
    assert!(generate_trials(&[utts[0].clone(), utts[0].clone()], Protocol::One, 0).is_err());
}
