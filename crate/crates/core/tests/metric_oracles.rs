mod common;

use censurv::metrics::{aggregate_by_patient, c_index, censored_mae, uncensored_mae, Scored};
use common::rng;
use rand::Rng;

const INSTANCES: usize = 1000;

/// Small integer grids so that ties in both labels and predictions occur.
fn instance<R: Rng>(r: &mut R) -> Vec<Scored> {
    let n = r.random_range(1..=50);
    (0..n)
        .map(|_| {
            Scored::new(
                r.random_range(0..40) as f64 * 7.5,
                r.random_range(1..30) as f64 * 10.0,
                r.random_bool(0.4),
            )
        })
        .collect()
}

fn oracle_censored_mae(p: &[Scored]) -> f64 {
    let mut total = 0.0;
    for s in p {
        let err = if s.censored && s.t_hat >= s.y {
            0.0
        } else {
            (s.t_hat - s.y).abs()
        };
        total += err;
    }
    total / p.len() as f64
}

fn oracle_uncensored_mae(p: &[Scored]) -> Option<f64> {
    let mut total = 0.0;
    let mut n = 0;
    for s in p {
        if !s.censored {
            total += (s.t_hat - s.y).abs();
            n += 1;
        }
    }
    if n == 0 {
        None
    } else {
        Some(total / n as f64)
    }
}

/// Every ordered pair, straight from the definition.
fn oracle_c_index(p: &[Scored]) -> Option<f64> {
    let (mut conc, mut tied, mut comp) = (0u64, 0u64, 0u64);
    for a in p {
        for b in p {
            if !a.censored && a.y < b.y {
                comp += 1;
                if a.t_hat < b.t_hat {
                    conc += 1;
                } else if a.t_hat == b.t_hat {
                    tied += 1;
                }
            }
        }
    }
    if comp == 0 {
        None
    } else {
        Some((conc as f64 + 0.5 * tied as f64) / comp as f64)
    }
}

fn oracle_aggregate(p: &[(String, Scored)]) -> Vec<(String, Scored)> {
    let mut ids: Vec<&String> = p.iter().map(|(id, _)| id).collect();
    ids.sort();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let mut sum = 0.0;
            let mut n = 0;
            let mut label = None;
            for (pid, s) in p {
                if pid == id {
                    sum += s.t_hat;
                    n += 1;
                    label = Some((s.y, s.censored));
                }
            }
            let (y, c) = label.unwrap();
            (id.clone(), Scored::new(sum / n as f64, y, c))
        })
        .collect()
}

fn same(a: Option<f64>, b: Option<f64>) -> bool {
    a.map(f64::to_bits) == b.map(f64::to_bits)
}

#[test]
fn censored_and_uncensored_mae_bit_exact() {
    let mut r = rng(11);
    for _ in 0..INSTANCES {
        let p = instance(&mut r);
        assert_eq!(
            censored_mae(&p).unwrap().to_bits(),
            oracle_censored_mae(&p).to_bits()
        );
        assert!(same(uncensored_mae(&p), oracle_uncensored_mae(&p)));
    }
}

#[test]
fn c_index_bit_exact() {
    let mut r = rng(12);
    for _ in 0..INSTANCES {
        let p = instance(&mut r);
        assert!(same(c_index(&p), oracle_c_index(&p)), "{p:?}");
    }
}

#[test]
fn aggregation_bit_exact() {
    let mut r = rng(13);
    for _ in 0..INSTANCES {
        let n_patients = r.random_range(1..=10);
        let labels: Vec<(f64, bool)> = (0..n_patients)
            .map(|_| (r.random_range(1..30) as f64 * 10.0, r.random_bool(0.5)))
            .collect();
        let n = r.random_range(1..=50);
        let preds: Vec<(String, Scored)> = (0..n)
            .map(|_| {
                let k = r.random_range(0..n_patients);
                (
                    format!("p{k}"),
                    Scored::new(r.random_range(0.0..3000.0), labels[k].0, labels[k].1),
                )
            })
            .collect();
        let got = aggregate_by_patient(&preds).unwrap();
        let want = oracle_aggregate(&preds);
        assert_eq!(got.len(), want.len());
        for ((ga, gs), (wa, ws)) in got.iter().zip(&want) {
            assert_eq!(ga, wa);
            assert_eq!(gs.t_hat.to_bits(), ws.t_hat.to_bits());
            assert_eq!((gs.y, gs.censored), (ws.y, ws.censored));
        }
    }
}

#[test]
fn over_predicting_censored_and_exact_uncensored_is_zero() {
    let mut r = rng(14);
    let p: Vec<Scored> = (0..500)
        .map(|_| {
            let y = r.random_range(1.0..3000.0);
            if r.random_bool(0.5) {
                Scored::new(y + r.random_range(0.0..1000.0), y, true)
            } else {
                Scored::new(y, y, false)
            }
        })
        .collect();
    assert_eq!(censored_mae(&p).unwrap(), 0.0);
}
