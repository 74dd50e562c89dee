//! Independent interference tables and the oracles built on them. Nothing
//! here calls into the simulator's optics.

use pmgv::optics::{Bit, CorrelationId};

use CorrelationId::{C1, C2, C3, C4};

/// Bob's prepare-measure apparatus as (sign, phase sign).
pub fn bob_table(c: CorrelationId) -> (f64, f64) {
    match c {
        C1 => (-1.0, 1.0),
        C2 => (1.0, -1.0),
        C3 => (-1.0, -1.0),
        C4 => (1.0, 1.0),
    }
}

pub fn theta2_table(c: CorrelationId) -> f64 {
    match c {
        C1 | C4 => 45.0,
        C2 | C3 => -45.0,
    }
}

/// Relative phase Alice applies for a guess.
pub fn lock_table(guess: CorrelationId) -> f64 {
    match guess {
        C1 | C4 => -90.0,
        C2 | C3 => 90.0,
    }
}

pub fn key_table(c: CorrelationId) -> Bit {
    match c {
        C1 | C3 => Bit::Zero,
        C2 | C4 => Bit::One,
    }
}

pub fn cos_deg(x: f64) -> f64 {
    x.to_radians().cos()
}

/// Port of a deterministic term: `+` is bit 1.
pub fn port_bit(term: f64) -> Bit {
    assert!((term.abs() - 1.0).abs() < 1e-9, "non-deterministic term {term}");
    if term > 0.0 {
        Bit::One
    } else {
        Bit::Zero
    }
}

pub fn closed_form(c: CorrelationId, t1: f64, t2: f64) -> f64 {
    match c {
        C1 => -cos_deg(2.0 * (t1 - t2)),
        C2 => cos_deg(2.0 * (t1 + t2)),
        C3 => -cos_deg(2.0 * (t1 + t2)),
        C4 => cos_deg(2.0 * (t1 - t2)),
    }
}

/// Bob's verify term at his angle for `actual`, for a photon arriving with `phase`.
pub fn verify_term(actual: CorrelationId, phase: f64) -> f64 {
    cos_deg(2.0 * theta2_table(actual) + phase)
}

/// Error probability of one guess-verify round under intercept-resend,
/// enumerated over Bob's choice, Alice's guess and Eve's choices for that
/// Bob choice. Eve resends the lock value that reproduces her port, and a
/// photon prepared under the other convention (C1/C4 vs C2/C3) reaches Bob
/// with its phase reversed.
pub fn intercept_resend_qber(eve_choices: impl Fn(CorrelationId) -> Vec<CorrelationId>) -> f64 {
    let locked = |c: CorrelationId| matches!(c, C1 | C4);
    let mut total = 0.0;
    for bob in CorrelationId::ALL {
        let guesses: Vec<CorrelationId> =
            CorrelationId::ALL.into_iter().filter(|g| g.group() == bob.group()).collect();
        let eves = eve_choices(bob);
        for &guess in &guesses {
            for &eve in &eves {
                let (s, p) = bob_table(eve);
                let term = |phase: f64| s * cos_deg(2.0 * theta2_table(eve) + p * phase);
                let seen = term(lock_table(guess));
                let resent = [-90.0, 90.0].into_iter().find(|&phi| term(phi) * seen > 0.0).unwrap();
                let arriving = if locked(eve) == locked(bob) { resent } else { -resent };
                let inferred = if verify_term(bob, arriving) > 0.0 {
                    key_table(bob)
                } else {
                    key_table(bob.partner())
                };
                if inferred != key_table(guess) {
                    total += 1.0 / (4.0 * guesses.len() as f64 * eves.len() as f64);
                }
            }
        }
    }
    total
}

/// Poisson pmf up to `k_max`.
pub fn poisson_pmf(mean: f64, k_max: usize) -> Vec<f64> {
    let mut pmf = vec![(-mean).exp()];
    for k in 1..=k_max {
        let prev = pmf[k - 1];
        pmf.push(prev * mean / k as f64);
    }
    pmf
}
