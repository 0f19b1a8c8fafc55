//! Test labels inside (ID) and outside (OOD) the training latent support of
//! the planar three-perturbation design.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::genmodel::PerturbationLabel;
use crate::numeric::SeededRng;

const K: usize = 3;
const TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TestKind {
    Id,
    Ood,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Validation,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arity {
    Single,
    Double,
}

impl TestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::Id => "ID",
            TestKind::Ood => "OOD",
        }
    }
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl Arity {
    pub fn as_str(self) -> &'static str {
        match self {
            Arity::Single => "single",
            Arity::Double => "double",
        }
    }

    /// Number of sampling settings: one per coordinate for singles, one per
    /// branch set for doubles.
    pub fn num_settings(self) -> usize {
        match self {
            Arity::Single => 3,
            Arity::Double => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestCase {
    pub id: usize,
    pub label: PerturbationLabel,
    pub kind: TestKind,
    pub split: Split,
    pub arity: Arity,
    pub setting: usize,
}

fn label(v: [f64; K]) -> PerturbationLabel {
    PerturbationLabel::from(&v[..])
}

fn check_k(k: usize) -> Result<()> {
    if k != K {
        return Err(Error::invalid(format!(
            "test-label regions are defined for 3 perturbations, got {k}"
        )));
    }
    Ok(())
}

/// ID doubles: `[a, b, 0]` with `a, b in [0, 1]`; `[a, 0, c]` and `[0, a, c]`
/// with `c in [0, 1]`, `a in [0, 1 - c]`.
fn id_double_branch(rng: &mut SeededRng, branch: usize) -> PerturbationLabel {
    match branch {
        0 => label([rng.uniform(), rng.uniform(), 0.0]),
        1 | 2 => {
            let c = rng.uniform();
            let a = rng.uniform_in(0.0, 1.0 - c);
            if branch == 1 {
                label([a, 0.0, c])
            } else {
                label([0.0, a, c])
            }
        }
        _ => unreachable!("three ID double branches"),
    }
}

/// OOD doubles. First pair: `[a, b, 0]` with `a in [0, 2]` and `b = 2 b0` when
/// `a >= 1`, `b = b0 + 1` otherwise (and the same with the roles of `a` and
/// `b` swapped). Second pair: `[a, 0, c]` and `[0, a, c]` with `c in [0, 2]`
/// and `a = a0 (2 - max(1, c)) + max(1 - c, 0)`.
fn ood_double_branch(rng: &mut SeededRng, branch: usize) -> PerturbationLabel {
    match branch {
        0 | 1 => {
            let free = rng.uniform_in(0.0, 2.0);
            let b0 = rng.uniform();
            let other = if free >= 1.0 { 2.0 * b0 } else { b0 + 1.0 };
            if branch == 0 {
                label([free, other, 0.0])
            } else {
                label([other, free, 0.0])
            }
        }
        2 | 3 => {
            let c = rng.uniform_in(0.0, 2.0);
            let a0 = rng.uniform();
            let a = a0 * (2.0 - c.max(1.0)) + (1.0 - c).max(0.0);
            if branch == 2 {
                label([a, 0.0, c])
            } else {
                label([0.0, a, c])
            }
        }
        _ => unreachable!("four OOD double branches"),
    }
}

/// Draws a label from one setting: the active coordinate for singles, the
/// branch set for doubles. ID doubles have three printed branch sets; their
/// fourth setting picks one of the three uniformly.
pub fn sample_test_label_in_setting(
    rng: &mut SeededRng,
    kind: TestKind,
    arity: Arity,
    setting: usize,
) -> Result<PerturbationLabel> {
    if setting >= arity.num_settings() {
        return Err(Error::invalid(format!(
            "setting {setting} out of range for {} labels",
            arity.as_str()
        )));
    }
    Ok(match (kind, arity) {
        (_, Arity::Single) => {
            let mut v = [0.0; K];
            v[setting] = match kind {
                TestKind::Id => rng.uniform(),
                TestKind::Ood => rng.uniform_in(1.0, 2.0),
            };
            label(v)
        }
        (TestKind::Id, Arity::Double) => {
            let branch = if setting < 3 { setting } else { rng.index(3) };
            id_double_branch(rng, branch)
        }
        (TestKind::Ood, Arity::Double) => ood_double_branch(rng, setting),
    })
}

/// Uniformly chosen setting, then a uniform draw within it.
pub fn sample_test_label(
    rng: &mut SeededRng,
    kind: TestKind,
    arity: Arity,
    num_perturbations: usize,
) -> Result<PerturbationLabel> {
    check_k(num_perturbations)?;
    let setting = match (kind, arity) {
        (TestKind::Id, Arity::Double) => rng.index(3),
        _ => rng.index(arity.num_settings()),
    };
    sample_test_label_in_setting(rng, kind, arity, setting)
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo - TOL && v <= hi + TOL
}

/// Membership in the region a sampler draws from.
pub fn in_region(a: &PerturbationLabel, kind: TestKind, arity: Arity) -> bool {
    let v = a.as_slice();
    if v.len() != K {
        return false;
    }
    let nonzero: Vec<usize> = (0..K).filter(|&i| v[i] != 0.0).collect();
    match arity {
        Arity::Single => {
            if nonzero.len() > 1 || v.iter().any(|x| *x < 0.0) {
                return false;
            }
            match kind {
                TestKind::Id => v.iter().all(|&x| within(x, 0.0, 1.0)),
                TestKind::Ood => nonzero.len() == 1 && within(v[nonzero[0]], 1.0, 2.0),
            }
        }
        Arity::Double => {
            let [a, b, c] = [v[0], v[1], v[2]];
            let id = match kind {
                TestKind::Id => true,
                TestKind::Ood => false,
            };
            let first = c == 0.0
                && if id {
                    within(a, 0.0, 1.0) && within(b, 0.0, 1.0)
                } else {
                    within(a, 0.0, 2.0) && within(b, 0.0, 2.0) && (a >= 1.0 - TOL || b >= 1.0 - TOL)
                };
            // [x, 0, c] or [0, x, c]
            let coupled = |x: f64| {
                if id {
                    within(c, 0.0, 1.0) && within(x, 0.0, 1.0 - c)
                } else {
                    within(c, 0.0, 2.0) && within(x, (1.0 - c).max(0.0), 2.0 - c)
                }
            };
            first || (b == 0.0 && coupled(a)) || (a == 0.0 && coupled(b))
        }
    }
}

/// ID and OOD test cases: every (kind, arity, setting) triple gets
/// `draws_per_setting` labels. ID draws alternate between validation and
/// test; OOD draws are all test cases.
pub fn make_test_suite(rng: &mut SeededRng, draws_per_setting: usize) -> Result<Vec<TestCase>> {
    let mut out = Vec::new();
    for kind in [TestKind::Id, TestKind::Ood] {
        for arity in [Arity::Single, Arity::Double] {
            for setting in 0..arity.num_settings() {
                for d in 0..draws_per_setting {
                    let split = match kind {
                        TestKind::Id if d % 2 == 0 => Split::Validation,
                        _ => Split::Test,
                    };
                    out.push(TestCase {
                        id: out.len(),
                        label: sample_test_label_in_setting(rng, kind, arity, setting)?,
                        kind,
                        split,
                        arity,
                        setting,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Test-split cases only, in suite order.
pub fn evaluation_cases(suite: &[TestCase]) -> Vec<TestCase> {
    suite.iter().filter(|c| c.split == Split::Test).cloned().collect()
}
