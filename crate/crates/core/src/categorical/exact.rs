//! Finitely supported laws kept exactly, without projection.

use super::{Coeff, CoeffFamily, SupportGrid};
use crate::error::{Error, Result};

/// Locations closer than this are merged into a single atom.
pub const MERGE_TOL: f64 = 1e-12;

/// A finitely supported law: sorted, merged `(location, mass)` atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicLaw {
    atoms: Vec<(f64, f64)>,
}

impl AtomicLaw {
    /// Sorts, merges atoms within [`MERGE_TOL`], drops zero masses and checks unit mass.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyLaw);
        }
        if let Some(&(x, w)) = atoms.iter().find(|(x, w)| !x.is_finite() || !(*w >= 0.0)) {
            return Err(Error::Domain(format!("atom ({x}, {w}) has a non-finite location or negative mass")));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("law masses sum to {total}, expected 1")));
        }
        Ok(Self::canonical(atoms, MERGE_TOL))
    }

    pub fn dirac(x: f64) -> Self {
        Self { atoms: vec![(x, 1.0)] }
    }

    /// Sort by location and merge runs whose locations stay within `tol` of the
    /// run's first atom. The merged atom keeps the first location.
    pub(crate) fn canonical(mut atoms: Vec<(f64, f64)>, tol: f64) -> Self {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            if w == 0.0 {
                continue;
            }
            match out.last_mut() {
                Some(last) if x - last.0 <= tol => last.1 += w,
                _ => out.push((x, w)),
            }
        }
        Self { atoms: out }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn translate(&self, c: f64) -> Self {
        Self {
            atoms: self.atoms.iter().map(|&(x, w)| (x + c, w)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(x, w)| x * w).sum()
    }

    pub fn min_location(&self) -> f64 {
        self.atoms[0].0
    }

    /// Re-merges at a coarser tolerance.
    pub fn merged(&self, tol: f64) -> Self {
        Self::canonical(self.atoms.clone(), tol)
    }

    /// `sum_k weights_k delta_{theta_k + shift}`.
    pub fn from_coeff(p: &Coeff, grid: &SupportGrid, shift: f64) -> Self {
        Self::canonical(
            p.weights()
                .iter()
                .enumerate()
                .map(|(k, &w)| (grid.atom(k) + shift, w))
                .collect(),
            MERGE_TOL,
        )
    }
}

/// Cramér distance `sqrt(int (F_a - F_b)^2)` by integrating the step CDFs exactly.
pub fn cramer_distance(a: &AtomicLaw, b: &AtomicLaw) -> f64 {
    let mut breaks: Vec<(f64, f64)> = a
        .atoms
        .iter()
        .copied()
        .chain(b.atoms.iter().map(|&(x, w)| (x, -w)))
        .collect();
    breaks.sort_by(|u, v| u.0.total_cmp(&v.0));
    let mut diff = 0.0;
    let mut acc = 0.0;
    for win in 0..breaks.len() {
        diff += breaks[win].1;
        if let Some(next) = breaks.get(win + 1) {
            acc += diff * diff * (next.0 - breaks[win].0);
        }
    }
    acc.sqrt()
}

/// Per-state atomic laws standing for the class of their common translations.
///
/// State `i`'s law is `laws[i]` translated by `common_shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactLawFamily {
    laws: Vec<AtomicLaw>,
    common_shift: f64,
}

impl ExactLawFamily {
    pub fn new(laws: Vec<AtomicLaw>, common_shift: f64) -> Result<Self> {
        if laws.is_empty() {
            return Err(Error::Dimension("law family has no states".into()));
        }
        if !common_shift.is_finite() {
            return Err(Error::Domain("common shift is not finite".into()));
        }
        Ok(Self { laws, common_shift })
    }

    /// The representative `eta^{p,c}`.
    pub fn from_coeffs(p: &CoeffFamily, grid: &SupportGrid, c: f64) -> Self {
        Self {
            laws: p.blocks().iter().map(|b| AtomicLaw::from_coeff(b, grid, 0.0)).collect(),
            common_shift: c,
        }
    }

    pub fn num_states(&self) -> usize {
        self.laws.len()
    }

    pub fn common_shift(&self) -> f64 {
        self.common_shift
    }

    /// State `i`'s law with the common shift applied.
    pub fn law(&self, i: usize) -> AtomicLaw {
        if self.common_shift == 0.0 {
            self.laws[i].clone()
        } else {
            self.laws[i].translate(self.common_shift)
        }
    }

    /// Every state's law with the common shift folded in.
    pub fn absolute(&self) -> Vec<AtomicLaw> {
        (0..self.num_states()).map(|i| self.law(i)).collect()
    }

    /// The same class member moved by `c`.
    pub fn translate(&self, c: f64) -> Self {
        Self {
            laws: self.laws.clone(),
            common_shift: self.common_shift + c,
        }
    }

    /// Absolute laws repackaged with zero common shift.
    pub fn normalized(&self) -> Self {
        Self {
            laws: self.absolute(),
            common_shift: 0.0,
        }
    }

    /// Sup over states of [`cramer_distance`].
    pub fn cramer_sup(&self, other: &Self) -> Result<f64> {
        if self.num_states() != other.num_states() {
            return Err(Error::Dimension(format!(
                "families have {} and {} states",
                self.num_states(),
                other.num_states()
            )));
        }
        Ok((0..self.num_states())
            .map(|i| cramer_distance(&self.law(i), &other.law(i)))
            .fold(0.0, f64::max))
    }
}

/// The shift `c` with `B = A + c` statewise, if one exists within `tol`.
///
/// Atoms closer than `tol / 10` are merged first. The candidate comes from the
/// minimal locations of state 0 and is then checked on every atom of every state.
pub fn equal_up_to_translation(a: &ExactLawFamily, b: &ExactLawFamily, tol: f64) -> Option<f64> {
    if a.num_states() != b.num_states() {
        return None;
    }
    let merge = tol / 10.0;
    let la: Vec<AtomicLaw> = a.absolute().iter().map(|l| l.merged(merge)).collect();
    let lb: Vec<AtomicLaw> = b.absolute().iter().map(|l| l.merged(merge)).collect();
    let c = lb[0].min_location() - la[0].min_location();
    let all_match = la.iter().zip(&lb).all(|(x, y)| {
        x.atoms.len() == y.atoms.len()
            && x
                .atoms
                .iter()
                .zip(&y.atoms)
                .all(|(&(lx, wx), &(ly, wy))| (lx + c - ly).abs() <= tol && (wx - wy).abs() <= tol)
    });
    all_match.then_some(c)
}
