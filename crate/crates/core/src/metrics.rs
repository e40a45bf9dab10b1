//! Group tallies and exact Disparate Impact.

use std::cmp::Ordering;
use std::fmt;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Epsilon, Group, LabelSpec, PredictionPair};

/// Group sizes and favorable counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct GroupTally {
    pub n_priv: u32,
    pub n_unpriv: u32,
    pub fav_priv: u32,
    pub fav_unpriv: u32,
}

impl GroupTally {
    pub fn new(n_priv: u32, n_unpriv: u32, fav_priv: u32, fav_unpriv: u32) -> Result<Self> {
        if fav_priv > n_priv || fav_unpriv > n_unpriv {
            return Err(Error::TallyInvariant("favorable count exceeds group size"));
        }
        Ok(GroupTally {
            n_priv,
            n_unpriv,
            fav_priv,
            fav_unpriv,
        })
    }

    pub fn total(&self) -> u64 {
        self.n_priv as u64 + self.n_unpriv as u64
    }

    pub fn size(&self, g: Group) -> u32 {
        match g {
            Group::Privileged => self.n_priv,
            Group::Unprivileged => self.n_unpriv,
        }
    }

    pub fn favorable(&self, g: Group) -> u32 {
        match g {
            Group::Privileged => self.fav_priv,
            Group::Unprivileged => self.fav_unpriv,
        }
    }

    fn favorable_mut(&mut self, g: Group) -> &mut u32 {
        match g {
            Group::Privileged => &mut self.fav_priv,
            Group::Unprivileged => &mut self.fav_unpriv,
        }
    }

    pub fn rate(&self, g: Group) -> f64 {
        self.favorable(g) as f64 / self.size(g) as f64
    }

    /// DI of `numerator` group's favorable rate over the other group's rate.
    pub fn ratio_for(&self, numerator: Group) -> Result<DisparateImpact> {
        let other = numerator.other();
        if self.size(numerator) == 0 || self.size(other) == 0 {
            return Err(Error::UndefinedMetric("a protected group is empty"));
        }
        let num = self.favorable(numerator) as u64 * self.size(other) as u64;
        let den = self.favorable(other) as u64 * self.size(numerator) as u64;
        DisparateImpact::new(num, den)
    }

    /// `ratio_for(g)` as a float plus the `>= 1 - eps` test, without reducing the fraction.
    /// The other group must have a positive favorable count.
    pub(crate) fn minority_ratio(&self, g: Group, eps: Epsilon) -> (f64, bool) {
        let num = self.favorable(g) as u64 * self.size(g.other()) as u64;
        let den = self.favorable(g.other()) as u64 * self.size(g) as u64;
        let (ln, ld) = eps.lower_bound();
        let met = num as u128 * ld as u128 >= ln as u128 * den as u128;
        (num as f64 / den as f64, met)
    }
}

/// Counts favorability of `y_factual` per group.
pub fn tally(pairs: &[PredictionPair], labels: &LabelSpec) -> Result<GroupTally> {
    let cut = labels.cut()?;
    let mut t = [0u64; 4];
    for p in pairs {
        let fav = p.y_factual <= cut;
        match p.group {
            Group::Privileged => {
                t[0] += 1;
                t[2] += fav as u64;
            }
            Group::Unprivileged => {
                t[1] += 1;
                t[3] += fav as u64;
            }
        }
    }
    if t[0] == 0 || t[1] == 0 {
        return Err(Error::UndefinedMetric("a protected group is empty"));
    }
    let narrow = |v: u64| u32::try_from(v).map_err(|_| Error::TallyInvariant("group too large"));
    GroupTally::new(narrow(t[0])?, narrow(t[1])?, narrow(t[2])?, narrow(t[3])?)
}

/// Exact non-negative ratio; a zero denominator with a positive numerator is infinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DisparateImpact {
    num: u64,
    den: u64,
}

impl DisparateImpact {
    pub const ONE: DisparateImpact = DisparateImpact { num: 1, den: 1 };
    pub const INFINITY: DisparateImpact = DisparateImpact { num: 1, den: 0 };

    /// Reduced `num / den`. `0 / 0` is undefined.
    pub fn new(num: u64, den: u64) -> Result<Self> {
        match (num, den) {
            (0, 0) => Err(Error::UndefinedMetric("both favorable rates are zero")),
            (_, 0) => Ok(Self::INFINITY),
            (0, _) => Ok(DisparateImpact { num: 0, den: 1 }),
            _ => {
                let g = num.gcd(&den);
                Ok(DisparateImpact {
                    num: num / g,
                    den: den / g,
                })
            }
        }
    }

    pub fn numer(&self) -> u64 {
        self.num
    }

    pub fn denom(&self) -> u64 {
        self.den
    }

    pub fn is_infinite(&self) -> bool {
        self.den == 0
    }

    pub fn recip(self) -> Self {
        if self.num == 0 {
            Self::INFINITY
        } else {
            DisparateImpact {
                num: self.den,
                den: self.num,
            }
        }
    }

    pub fn to_f64(self) -> f64 {
        if self.is_infinite() {
            f64::INFINITY
        } else {
            self.num as f64 / self.den as f64
        }
    }

    /// `self >= 1 - epsilon`.
    pub fn meets_lower_bound(self, eps: Epsilon) -> bool {
        if self.is_infinite() {
            return true;
        }
        let (ln, ld) = eps.lower_bound();
        self.num as u128 * ld as u128 >= ln as u128 * self.den as u128
    }

    /// `self <= 1 / (1 - epsilon)`.
    pub fn meets_upper_bound(self, eps: Epsilon) -> bool {
        if self.is_infinite() {
            return false;
        }
        let (ln, ld) = eps.lower_bound();
        self.num as u128 * ln as u128 <= ld as u128 * self.den as u128
    }
}

impl Ord for DisparateImpact {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.is_infinite(), other.is_infinite()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Greater,
            (false, true) => Ordering::Less,
            _ => (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128)),
        }
    }
}

impl PartialOrd for DisparateImpact {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for DisparateImpact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Unprivileged favorable rate over privileged favorable rate.
pub fn disparate_impact(t: &GroupTally) -> Result<DisparateImpact> {
    t.ratio_for(Group::Unprivileged)
}

/// Adjusts one group's favorable count for a single label change.
pub fn apply_flip(t: &GroupTally, group: Group, old_fav: bool, new_fav: bool) -> Result<GroupTally> {
    let mut next = *t;
    let size = t.size(group);
    let fav = next.favorable_mut(group);
    match (old_fav, new_fav) {
        (false, true) => {
            if *fav >= size {
                return Err(Error::TallyInvariant("favorable count overflow"));
            }
            *fav += 1;
        }
        (true, false) => {
            *fav = fav
                .checked_sub(1)
                .ok_or(Error::TallyInvariant("favorable count underflow"))?;
        }
        _ => {}
    }
    Ok(next)
}

/// Two-sided fairness band `1 - eps <= di <= 1 / (1 - eps)`.
pub fn is_fair(di: DisparateImpact, epsilon: Epsilon) -> bool {
    di.meets_lower_bound(epsilon) && di.meets_upper_bound(epsilon)
}
