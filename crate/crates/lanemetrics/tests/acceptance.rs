//! Core acceptance suite: deterministic criteria with independent
//! test-side oracles. Each criterion prints one PASS/FAIL line.

// index loops below mirror the matrix arithmetic of the oracles
#![allow(clippy::needless_range_loop)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use lanemetrics::correlation::{p_two_tailed, partial_pearson};
use lanemetrics::curves::{curve_relative_deviation, CenterBand, CurveWindow, Direction};
use lanemetrics::envelope::{envelope_count, polar_bin, EnvelopeConfig};
use lanemetrics::ingest::{RoadType, SampleRecord};
use lanemetrics::kinematics::drift_velocity_series;
use lanemetrics::mdsi::{refined_scores, Factor, ItemBank, ResponseSet};
use lanemetrics::pca::varimax;
use lanemetrics::stats::stat_block;
use lanemetrics::stationary::fit_ccg;
use lanemetrics::transient::{classify, encode_curve, intensity, CurveCode, TrajectoryClass};

fn criterion(name: &str, f: impl FnOnce()) {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(()) => println!("PASS: {name}"),
        Err(e) => {
            println!("FAIL: {name}");
            std::panic::resume_unwind(e);
        }
    }
}

#[test]
fn envelope_reference_point_count() {
    criterion("envelope count at 15 degree stride is 24", || {
        assert_eq!(envelope_count(15.0).unwrap(), 24);
    });
}

#[test]
fn polar_binning_brute_force() {
    criterion(
        "polar binning matches brute-force oracle on 10k points within 1e-12, under 1s",
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let pts: Vec<(f64, f64)> = (0..10_000)
                .map(|_| (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)))
                .collect();
            let cfg = EnvelopeConfig::default();
            let started = Instant::now();
            let env = polar_bin(&pts, &cfg).unwrap();
            assert!(started.elapsed().as_secs_f64() < 1.0, "too slow");

            for bin in &env.points {
                let mut radii: Vec<f64> = pts
                    .iter()
                    .filter(|&&(x, y)| {
                        let theta = y.atan2(x).to_degrees();
                        let mut d = (theta - bin.center_angle_deg).abs();
                        if d > 180.0 {
                            d = 360.0 - d;
                        }
                        d <= cfg.delta_r_deg
                    })
                    .map(|&(x, y)| x.hypot(y))
                    .collect();
                radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
                assert_eq!(bin.n_points, radii.len());
                if radii.is_empty() {
                    continue;
                }
                let n = radii.len() as f64;
                let mean = radii.iter().sum::<f64>() / n;
                let pct = |p: f64| {
                    let rank = p / 100.0 * (n - 1.0);
                    let lo = rank.floor() as usize;
                    let hi = rank.ceil() as usize;
                    radii[lo] + (rank - lo as f64) * (radii[hi] - radii[lo])
                };
                assert!((bin.mean_r - mean).abs() <= 1e-12);
                assert!((bin.max_r - radii[radii.len() - 1]).abs() <= 1e-12);
                assert!((bin.p75_r - pct(75.0)).abs() <= 1e-12);
                assert!((bin.p95_r - pct(95.0)).abs() <= 1e-12);
            }
        },
    );
}

/// Jacobi eigen-decomposition, independent of the library's solver.
fn jacobi(m: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.len();
    let mut a = m.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..200 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[i][j] * a[i][j];
                }
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-16 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    (vals, v)
}

#[test]
fn varimax_preserves_communality() {
    criterion(
        "varimax preserves communalities and total variance within 1e-9 on 20 random 40x24 matrices",
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(20);
            for _ in 0..20 {
                let data: Vec<Vec<f64>> = (0..40)
                    .map(|_| (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect();
                // standardized columns and correlation matrix, by hand
                let n = 40usize;
                let p = 24usize;
                let mut z = vec![vec![0.0; p]; n];
                for j in 0..p {
                    let mean = data.iter().map(|r| r[j]).sum::<f64>() / n as f64;
                    let sd = (data
                        .iter()
                        .map(|r| (r[j] - mean) * (r[j] - mean))
                        .sum::<f64>()
                        / (n as f64 - 1.0))
                        .sqrt();
                    for i in 0..n {
                        z[i][j] = (data[i][j] - mean) / sd;
                    }
                }
                let mut corr = vec![vec![0.0; p]; p];
                for a in 0..p {
                    for b in 0..p {
                        corr[a][b] = (0..n).map(|i| z[i][a] * z[i][b]).sum::<f64>()
                            / (n as f64 - 1.0);
                    }
                }
                let (vals, vecs) = jacobi(&corr);
                let mut order: Vec<usize> = (0..p).collect();
                order.sort_by(|&x, &y| vals[y].partial_cmp(&vals[x]).unwrap());
                let k = 2;
                let unrotated = DMatrix::from_fn(p, k, |i, j| {
                    vecs[i][order[j]] * vals[order[j]].sqrt()
                });
                let mut rotated = unrotated.clone();
                varimax(&mut rotated, 1e-6, 200);

                for i in 0..p {
                    let cu: f64 = unrotated.row(i).iter().map(|x| x * x).sum();
                    let cr: f64 = rotated.row(i).iter().map(|x| x * x).sum();
                    assert!((cu - cr).abs() <= 1e-9, "communality drift {cu} vs {cr}");
                }
                let tu: f64 = unrotated.iter().map(|x| x * x).sum();
                let tr: f64 = rotated.iter().map(|x| x * x).sum();
                assert!((tu - tr).abs() <= 1e-9, "total variance drift");
            }
        },
    );
}

#[test]
fn ccg_fit_recovery() {
    criterion(
        "CCG fit exact on noiseless line, within 0.01 on noise, normal-equation oracle 1e-10",
        || {
            let clean: Vec<(f64, f64)> = (0..10)
                .map(|i| {
                    let a = 0.3 + 0.25 * i as f64;
                    (a, 0.1 * a + 0.05)
                })
                .collect();
            let fit = fit_ccg(&clean).unwrap();
            assert!((fit.ccg - 0.1).abs() <= 1e-9);
            assert!((fit.ccg0 - 0.05).abs() <= 1e-9);
            assert!(fit.ci_width.abs() <= 1e-9);

            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let noise = Normal::new(0.0, 0.05).unwrap();
            let noisy: Vec<(f64, f64)> = (0..500)
                .map(|i| {
                    let a = 0.2 + 3.0 * i as f64 / 500.0;
                    (a, 0.099 * a + 0.039 + noise.sample(&mut rng))
                })
                .collect();
            let fit = fit_ccg(&noisy).unwrap();
            assert!((fit.ccg - 0.099).abs() < 0.01);

            let n = noisy.len() as f64;
            let sx: f64 = noisy.iter().map(|p| p.0).sum();
            let sy: f64 = noisy.iter().map(|p| p.1).sum();
            let sxx: f64 = noisy.iter().map(|p| p.0 * p.0).sum();
            let sxy: f64 = noisy.iter().map(|p| p.0 * p.1).sum();
            let det = n * sxx - sx * sx;
            assert!((fit.ccg - (n * sxy - sx * sy) / det).abs() <= 1e-10);
            assert!((fit.ccg0 - (sy * sxx - sx * sxy) / det).abs() <= 1e-10);
        },
    );
}

fn window_from_dev(dev: Vec<f64>, v: f64, direction: Direction) -> CurveWindow {
    let rate = 50.0;
    let sign = match direction {
        Direction::Left => 1.0,
        Direction::Right => -1.0,
    };
    let samples: Vec<SampleRecord> = dev
        .iter()
        .enumerate()
        .map(|(i, &d)| SampleRecord {
            t: i as f64 / rate,
            v_x: v,
            a_x: 0.0,
            a_y: sign * 1.5,
            d_cl: sign * d,
            kappa: sign * 0.004,
            road_type: RoadType::Rural,
            lane_change: false,
            oncoming: false,
            street_id: "R".into(),
            valid: true,
        })
        .collect();
    let arc: Vec<f64> = (0..dev.len()).map(|i| i as f64 * v / rate).collect();
    let d_cl: Vec<f64> = samples.iter().map(|s| s.d_cl).collect();
    CurveWindow {
        curve_id: 1,
        subject_id: "s".into(),
        direction,
        dev: curve_relative_deviation(&d_cl, direction),
        arc_length: *arc.last().unwrap(),
        arc,
        samples,
    }
}

fn dev_for_code(code: &str, magnitude: f64, n: usize) -> Vec<f64> {
    let bounds = [0, n / 6, n / 2, 5 * n / 6, n];
    let mut dev = Vec::with_capacity(n);
    for (seg, ch) in code.chars().enumerate() {
        let value = match ch {
            'C' => 0.0,
            'I' => magnitude,
            'O' => -magnitude,
            _ => unreachable!(),
        };
        dev.extend(std::iter::repeat_n(value, bounds[seg + 1] - bounds[seg]));
    }
    dev
}

#[test]
fn trajectory_classifier_generators() {
    criterion(
        "all 16 class generators classify correctly with mirror invariance; constant-offset intensity 5.0",
        || {
            // one generator code per class
            let generators: [(&str, TrajectoryClass); 16] = [
                ("CCCC", TrajectoryClass::Center),
                ("ICCC", TrajectoryClass::EarlyCutting),
                ("OCCC", TrajectoryClass::EarlyCounter),
                ("CCCI", TrajectoryClass::LateCutting),
                ("CCCO", TrajectoryClass::LateCounter),
                ("CICC", TrajectoryClass::Cutting),
                ("COCC", TrajectoryClass::Counter),
                ("OIIO", TrajectoryClass::SevereCutting),
                ("IOOI", TrajectoryClass::SevereCounter),
                ("IIII", TrajectoryClass::BiasedInner),
                ("OOOO", TrajectoryClass::BiasedOuter),
                ("CCIO", TrajectoryClass::Oscillating),
                ("ICIC", TrajectoryClass::OscillatingCutting),
                ("OCOC", TrajectoryClass::OscillatingCounter),
                ("OCCI", TrajectoryClass::SlowSevereCutting),
                ("ICCO", TrajectoryClass::SlowSevereCounter),
            ];
            let band = CenterBand {
                half_width: 0.24,
                per_subject_sd: Default::default(),
            };
            for (code, expected) in generators {
                let dev = dev_for_code(code, 0.5, 600);
                let left = window_from_dev(dev.clone(), 20.0, Direction::Left);
                let got = encode_curve(&left, &band).unwrap();
                assert_eq!(got, CurveCode::parse(code).unwrap(), "encode {code}");
                assert_eq!(classify(got), expected, "classify {code}");

                // mirrored as a right curve
                let right = window_from_dev(dev, 20.0, Direction::Right);
                assert_eq!(encode_curve(&right, &band).unwrap(), got, "mirror {code}");
                let il = intensity(&left, &band).unwrap().intensity;
                let ir = intensity(&right, &band).unwrap().intensity;
                assert!((il - ir).abs() <= 1e-12, "mirror intensity {code}");
            }

            let w = window_from_dev(vec![0.34; 501], 20.0, Direction::Left);
            let r = intensity(&w, &band).unwrap();
            assert!((r.intensity - 5.0).abs() <= 1e-9, "intensity {}", r.intensity);
        },
    );
}

#[test]
fn stat_blocks_sort_oracle() {
    criterion(
        "eight-statistic blocks match the sort-based oracle on 1000 random arrays within 1e-12",
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(55);
            for _ in 0..1000 {
                let len = rng.gen_range(5..200);
                let xs: Vec<f64> = (0..len).map(|_| rng.gen_range(-10.0..10.0)).collect();
                let block = stat_block(&xs).unwrap();

                let mut sorted = xs.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let n = sorted.len() as f64;
                let pct = |p: f64| {
                    let rank = p / 100.0 * (n - 1.0);
                    let lo = rank.floor() as usize;
                    let hi = rank.ceil() as usize;
                    sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo])
                };
                let mean = sorted.iter().sum::<f64>() / n;
                let sd = (sorted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
                let rms = (sorted.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
                let absmax = sorted
                    .iter()
                    .map(|x| x.abs())
                    .fold(f64::MIN, f64::max);

                assert!((block.absmax - absmax).abs() <= 1e-12);
                assert!((block.max - sorted[sorted.len() - 1]).abs() <= 1e-12);
                assert!((block.min - sorted[0]).abs() <= 1e-12);
                assert!((block.mean - mean).abs() <= 1e-12);
                assert!((block.median - pct(50.0)).abs() <= 1e-12);
                assert!((block.sd - sd).abs() <= 1e-12);
                assert!((block.rms - rms).abs() <= 1e-12);
                assert!((block.idr - (pct(90.0) - pct(10.0))).abs() <= 1e-12);
            }
        },
    );
}

#[test]
fn drift_velocity_sinusoid() {
    criterion(
        "drift velocity matches the closed-form sinusoid derivative within 1e-3",
        || {
            let rate = 50.0;
            let f = 0.1;
            let n = 500;
            let d_cl: Vec<f64> = (0..n)
                .map(|i| 0.2 * (2.0 * std::f64::consts::PI * f * i as f64 / rate).sin())
                .collect();
            let v = vec![15.0; n];
            let drift = drift_velocity_series(&d_cl, &v, rate, 5, 1.0).unwrap();
            for (i, x) in drift.iter().enumerate() {
                let t = i as f64 / rate;
                let analytic = 0.2
                    * 2.0
                    * std::f64::consts::PI
                    * f
                    * (2.0 * std::f64::consts::PI * f * t).cos();
                assert!((x - analytic * 100.0 / 15.0).abs() <= 1e-3, "sample {i}");
            }
        },
    );
}

fn random_cohort(n: usize, ids: &[u32], seed: u64) -> Vec<ResponseSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| ResponseSet {
            subject_id: format!("s{i:02}"),
            answers: ids.iter().map(|&id| (id, rng.gen_range(1..=6))).collect(),
        })
        .collect()
}

#[test]
fn refined_score_properties() {
    criterion(
        "refined scores: cohort means 0 (1e-9), R=I reduction (1e-9), linear-system oracle (1e-8)",
        || {
            let bank = ItemBank::bundled_default();
            let ids = bank.item_ids();
            let cohort = random_cohort(50, &ids, 61);
            let scores = refined_scores(&cohort, &bank).unwrap();
            for factor in Factor::ALL {
                let mean: f64 = scores
                    .iter()
                    .map(|s| s.scores[&factor].unwrap())
                    .sum::<f64>()
                    / scores.len() as f64;
                assert!(mean.abs() <= 1e-9, "{factor:?} mean {mean}");
            }

            // R = I reduction on an orthogonal design
            let bank_small = ItemBank::from_csv_str(
                "item_id,factor,loading,reversed\n1,angry,1.0,false\n2,risky,1.0,false",
            )
            .unwrap();
            let pattern: [[i64; 2]; 4] = [[1, 1], [1, -1], [-1, 1], [-1, -1]];
            let ortho: Vec<ResponseSet> = (0..16)
                .map(|i| ResponseSet {
                    subject_id: format!("o{i:02}"),
                    answers: [(1u32, 3 + pattern[i % 4][0]), (2u32, 3 + pattern[i % 4][1])]
                        .into_iter()
                        .collect(),
                })
                .collect();
            let small_scores = refined_scores(&ortho, &bank_small).unwrap();
            let n = ortho.len() as f64;
            for j in [1u32, 2] {
                let vals: Vec<f64> = ortho.iter().map(|r| r.answers[&j] as f64).collect();
                let mean = vals.iter().sum::<f64>() / n;
                let sd = (vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                    / (n - 1.0))
                    .sqrt();
                let factor = if j == 1 { Factor::Angry } else { Factor::Risky };
                for (r, s) in ortho.iter().zip(&small_scores) {
                    let z = (r.answers[&j] as f64 - mean) / sd;
                    assert!((s.scores[&factor].unwrap() - z).abs() <= 1e-9);
                }
            }

            // linear-system oracle via Gaussian elimination
            let p = ids.len();
            let nn = cohort.len();
            let raw: Vec<Vec<f64>> = cohort
                .iter()
                .map(|r| ids.iter().map(|id| r.answers[id] as f64).collect())
                .collect();
            let mut z = vec![vec![0.0; p]; nn];
            for j in 0..p {
                let mean = raw.iter().map(|r| r[j]).sum::<f64>() / nn as f64;
                let sd = (raw
                    .iter()
                    .map(|r| (r[j] - mean) * (r[j] - mean))
                    .sum::<f64>()
                    / (nn as f64 - 1.0))
                    .sqrt();
                for i in 0..nn {
                    z[i][j] = (raw[i][j] - mean) / sd;
                }
            }
            let mut r_mat = vec![vec![0.0; p]; p];
            for a in 0..p {
                for b in 0..p {
                    r_mat[a][b] =
                        (0..nn).map(|i| z[i][a] * z[i][b]).sum::<f64>() / (nn as f64 - 1.0);
                }
            }
            let mut lambda = vec![vec![0.0; 6]; p];
            for asg in &bank.assignments {
                let j = ids.iter().position(|&id| id == asg.item_id).unwrap();
                let k = Factor::ALL.iter().position(|&f| f == asg.factor).unwrap();
                lambda[j][k] += if asg.reversed { -asg.loading } else { asg.loading };
            }
            let solve = |rhs: Vec<f64>| {
                let mut a = r_mat.clone();
                let mut b = rhs;
                for col in 0..p {
                    let pivot = (col..p)
                        .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
                        .unwrap();
                    a.swap(col, pivot);
                    b.swap(col, pivot);
                    for row in col + 1..p {
                        let f = a[row][col] / a[col][col];
                        for c2 in col..p {
                            a[row][c2] -= f * a[col][c2];
                        }
                        b[row] -= f * b[col];
                    }
                }
                let mut x = vec![0.0; p];
                for row in (0..p).rev() {
                    let mut acc = b[row];
                    for c2 in row + 1..p {
                        acc -= a[row][c2] * x[c2];
                    }
                    x[row] = acc / a[row][row];
                }
                x
            };
            for (k, &factor) in Factor::ALL.iter().enumerate() {
                let w = solve((0..p).map(|j| lambda[j][k]).collect());
                for (i, s) in scores.iter().enumerate() {
                    let oracle: f64 = (0..p).map(|j| z[i][j] * w[j]).sum();
                    assert!((s.scores[&factor].unwrap() - oracle).abs() <= 1e-8);
                }
            }
        },
    );
}

#[test]
fn partial_correlation_oracles() {
    criterion(
        "partial correlation matches precision-matrix oracle (1e-10); p-value within 3 MC errors",
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(91);
            let mut gauss = move || -> f64 { StandardNormal.sample(&mut rng) };
            let n = 30;
            let z: Vec<f64> = (0..n).map(|_| gauss()).collect();
            let x: Vec<f64> = z.iter().map(|&v| 0.8 * v + 0.5 * gauss()).collect();
            let y: Vec<f64> = z
                .iter()
                .zip(&x)
                .map(|(&v, &u)| 0.6 * v + 0.3 * u + 0.4 * gauss())
                .collect();
            let (r, _, _) = partial_pearson(&x, &y, std::slice::from_ref(&z)).unwrap();

            let vars = [&x, &y, &z];
            let mean: Vec<f64> = vars.iter().map(|v| v.iter().sum::<f64>() / n as f64).collect();
            let mut c = [[0.0f64; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    c[a][b] = vars[a]
                        .iter()
                        .zip(vars[b])
                        .map(|(p, q)| (p - mean[a]) * (q - mean[b]))
                        .sum::<f64>()
                        / (n as f64 - 1.0);
                }
            }
            let det = c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1])
                - c[0][1] * (c[1][0] * c[2][2] - c[1][2] * c[2][0])
                + c[0][2] * (c[1][0] * c[2][1] - c[1][1] * c[2][0]);
            let cof = |i: usize, j: usize| {
                let (r1, r2) = match i {
                    0 => (1, 2),
                    1 => (0, 2),
                    _ => (0, 1),
                };
                let (c1, c2) = match j {
                    0 => (1, 2),
                    1 => (0, 2),
                    _ => (0, 1),
                };
                let minor = c[r1][c1] * c[r2][c2] - c[r1][c2] * c[r2][c1];
                if (i + j).is_multiple_of(2) {
                    minor
                } else {
                    -minor
                }
            };
            let p_xx = cof(0, 0) / det;
            let p_yy = cof(1, 1) / det;
            let p_xy = cof(1, 0) / det;
            let oracle = -p_xy / (p_xx * p_yy).sqrt();
            assert!((r - oracle).abs() <= 1e-10, "{r} vs {oracle}");

            // Monte-Carlo Student-t tail at t = 2.0, df = 10
            let mut rng = ChaCha8Rng::seed_from_u64(92);
            let df = 10usize;
            let m = 2_000_000usize;
            let mut hits = 0usize;
            for _ in 0..m {
                let zn: f64 = StandardNormal.sample(&mut rng);
                let chi2: f64 = (0..df)
                    .map(|_| {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        g * g
                    })
                    .sum();
                if (zn / (chi2 / df as f64).sqrt()).abs() > 2.0 {
                    hits += 1;
                }
            }
            let mc = hits as f64 / m as f64;
            let se = (mc * (1.0 - mc) / m as f64).sqrt();
            let r_at_t2 = (4.0 / (4.0 + df as f64)).sqrt();
            let p = p_two_tailed(r_at_t2, df);
            assert!((p - mc).abs() < 3.0 * se, "p {p} mc {mc} se {se}");
        },
    );
}
