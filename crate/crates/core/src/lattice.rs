//! Model descriptions and dense Hamiltonian assembly.
//!
//! Sites are labelled 1..=L in every public interface. The flux convention is
//! fixed here and nowhere else: the forward hop `i -> i+n` enters the matrix as
//! `H[i][i+n] = t_n e^{i n θ}` and the reverse hop as its conjugate.

use std::collections::BTreeMap;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cis, from_usize, tol, wrap_angle, Real, C};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    dim: usize,
    data: Vec<C<T>>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![C::new(T::zero(), T::zero()); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<C<T>>]) -> Result<Self> {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
            }
            m.data[i * dim..(i + 1) * dim].copy_from_slice(row);
        }
        Ok(m)
    }

    pub fn from_real_rows(rows: &[Vec<T>]) -> Result<Self> {
        let rows: Vec<Vec<C<T>>> = rows.iter().map(|r| r.iter().map(|&x| C::new(x, T::zero())).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[C<T>] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C<T>] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Entry addressed by 1-based site labels.
    pub fn site(&self, i: usize, j: usize) -> C<T> {
        self[(i - 1, j - 1)]
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt()
    }

    pub fn trace(&self) -> C<T> {
        (0..self.dim).fold(C::new(T::zero(), T::zero()), |acc, i| acc + self[(i, i)])
    }

    pub fn mul_vec(&self, v: &[C<T>]) -> Vec<C<T>> {
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(v).fold(C::new(T::zero(), T::zero()), |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Determinant by LU with partial pivoting. Intended for small blocks.
    pub fn determinant(&self) -> C<T> {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut det = C::new(T::one(), T::zero());
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| {
                    a[x * n + k].norm().partial_cmp(&a[y * n + k].norm()).unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(k);
            let pivot = a[p * n + k];
            if pivot.norm() == T::zero() {
                return C::new(T::zero(), T::zero());
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                det = -det;
            }
            det *= pivot;
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                if f.norm() == T::zero() {
                    continue;
                }
                for j in k + 1..n {
                    let u = a[k * n + j];
                    a[i * n + j] -= f * u;
                }
            }
        }
        det
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = C<T>;
    fn index(&self, (i, j): (usize, usize)) -> &C<T> {
        &self.data[i * self.dim + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C<T> {
        &mut self.data[i * self.dim + j]
    }
}

/// Hopping amplitudes keyed by range. A term `t_n` stands for both
/// `|i⟩⟨i+n|` with `t_n` and `|i+n⟩⟨i|` with `conj(t_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HoppingSet<T> {
    terms: BTreeMap<usize, C<T>>,
}

impl<T: Real> HoppingSet<T> {
    pub fn new(terms: impl IntoIterator<Item = (usize, C<T>)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, t) in terms {
            if n == 0 {
                return Err(Error::InvalidModel("hopping range must be >= 1".into()));
            }
            if !(t.re.is_finite() && t.im.is_finite()) {
                return Err(Error::InvalidModel(format!("hopping t_{n} is not finite")));
            }
            if t.norm() == T::zero() {
                return Err(Error::InvalidModel(format!("hopping t_{n} is zero")));
            }
            if map.insert(n, t).is_some() {
                return Err(Error::InvalidModel(format!("hopping range {n} given twice")));
            }
        }
        if map.is_empty() {
            return Err(Error::InvalidModel("no hopping terms".into()));
        }
        Ok(Self { terms: map })
    }

    /// Nearest-neighbour chain with real hopping `t`.
    pub fn nearest(t: T) -> Result<Self> {
        Self::new([(1, C::new(t, T::zero()))])
    }

    /// Real hoppings `t_1, t_2, ...`; zero entries are dropped.
    pub fn real(ts: &[T]) -> Result<Self> {
        Self::new(ts.iter().enumerate().filter(|(_, t)| **t != T::zero()).map(|(k, &t)| (k + 1, C::new(t, T::zero()))))
    }

    pub fn max_range(&self) -> usize {
        *self.terms.keys().next_back().expect("non-empty by construction")
    }

    pub fn get(&self, n: usize) -> Option<C<T>> {
        self.terms.get(&n).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, C<T>)> + '_ {
        self.terms.iter().map(|(&n, &t)| (n, t))
    }

    /// Same set with `t_n` replaced; a zero amplitude removes the term.
    pub fn with_term(&self, n: usize, t: C<T>) -> Result<Self> {
        let mut terms = self.terms.clone();
        if t.norm() == T::zero() {
            terms.remove(&n);
        } else {
            terms.insert(n, t);
        }
        Self::new(terms)
    }

    /// Each term multiplied by `e^{i n θ}`.
    pub fn with_flux(&self, theta: T) -> Self {
        Self { terms: self.terms.iter().map(|(&n, &t)| (n, t * cis(from_usize::<T>(n) * theta))).collect() }
    }

    pub fn is_real(&self) -> bool {
        self.terms.values().all(|t| t.im == T::zero())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PerturbationTerm<T> {
    pub site_i: usize,
    pub site_j: usize,
    pub amplitude: C<T>,
}

impl<T> PerturbationTerm<T> {
    pub fn new(site_i: usize, site_j: usize, amplitude: C<T>) -> Self {
        Self { site_i, site_j, amplitude }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[serde(alias = "Open", alias = "OBC", alias = "obc")]
    Open,
    #[serde(alias = "Periodic", alias = "PBC", alias = "pbc")]
    Periodic,
}

/// Where the flux of a periodic chain lives. Both gauges give the same
/// spectrum; `Uniform` is the per-bond `e^{iθ}` form, `WrapBond` puts the whole
/// `e^{iθL}` on the bond closing the ring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxGauge {
    #[default]
    Uniform,
    WrapBond,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec<T> {
    len: usize,
    boundary: Boundary,
    hoppings: HoppingSet<T>,
    flux_theta: T,
    gauge: FluxGauge,
    perturbations: Vec<PerturbationTerm<T>>,
}

impl<T: Real> ModelSpec<T> {
    pub fn new(
        len: usize,
        boundary: Boundary,
        hoppings: HoppingSet<T>,
        flux_theta: T,
        perturbations: Vec<PerturbationTerm<T>>,
    ) -> Result<Self> {
        let spec = Self {
            len,
            boundary,
            hoppings,
            flux_theta: wrap_angle(flux_theta),
            gauge: FluxGauge::Uniform,
            perturbations,
        };
        if !flux_theta.is_finite() {
            return Err(Error::InvalidModel("flux_theta is not finite".into()));
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn open(len: usize, hoppings: HoppingSet<T>) -> Result<Self> {
        Self::new(len, Boundary::Open, hoppings, T::zero(), Vec::new())
    }

    pub fn periodic(len: usize, hoppings: HoppingSet<T>, flux_theta: T) -> Result<Self> {
        Self::new(len, Boundary::Periodic, hoppings, flux_theta, Vec::new())
    }

    fn validate(&self) -> Result<()> {
        let m = self.hoppings.max_range();
        match self.boundary {
            Boundary::Open if self.len <= m => {
                return Err(Error::InvalidModel(format!("open chain needs L > M (L = {}, M = {m})", self.len)))
            }
            Boundary::Periodic if self.len <= 2 * m => {
                return Err(Error::InvalidModel(format!("periodic chain needs L > 2M (L = {}, M = {m})", self.len)))
            }
            _ => {}
        }
        for p in &self.perturbations {
            for site in [p.site_i, p.site_j] {
                if site == 0 || site > self.len {
                    return Err(Error::SiteOutOfRange { site, len: self.len });
                }
            }
            if !(p.amplitude.re.is_finite() && p.amplitude.im.is_finite()) {
                return Err(Error::InvalidModel("perturbation amplitude not finite".into()));
            }
        }
        Ok(())
    }

    pub fn with_perturbation(mut self, site_i: usize, site_j: usize, amplitude: C<T>) -> Result<Self> {
        self.perturbations.push(PerturbationTerm::new(site_i, site_j, amplitude));
        self.validate()?;
        Ok(self)
    }

    pub fn with_perturbations(mut self, terms: Vec<PerturbationTerm<T>>) -> Result<Self> {
        self.perturbations = terms;
        self.validate()?;
        Ok(self)
    }

    pub fn with_hoppings(mut self, hoppings: HoppingSet<T>) -> Result<Self> {
        self.hoppings = hoppings;
        self.validate()?;
        Ok(self)
    }

    pub fn with_flux_theta(mut self, theta: T) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::InvalidModel("flux_theta is not finite".into()));
        }
        self.flux_theta = wrap_angle(theta);
        Ok(self)
    }

    pub fn with_gauge(mut self, gauge: FluxGauge) -> Self {
        self.gauge = gauge;
        self
    }

    pub fn with_len(mut self, len: usize) -> Result<Self> {
        self.len = len;
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn hoppings(&self) -> &HoppingSet<T> {
        &self.hoppings
    }

    pub fn max_range(&self) -> usize {
        self.hoppings.max_range()
    }

    pub fn flux_theta(&self) -> T {
        self.flux_theta
    }

    pub fn gauge(&self) -> FluxGauge {
        self.gauge
    }

    pub fn perturbations(&self) -> &[PerturbationTerm<T>] {
        &self.perturbations
    }

    /// Bulk hoppings as they appear away from the wrap bond.
    pub fn bulk_hoppings(&self) -> HoppingSet<T> {
        match (self.boundary, self.gauge) {
            (Boundary::Periodic, FluxGauge::Uniform) => self.hoppings.with_flux(self.flux_theta),
            _ => self.hoppings.clone(),
        }
    }

    /// Extra phase on forward hops that cross the wrap bond, on top of the
    /// bulk hopping. `None` for open chains.
    pub fn wrap_phase(&self) -> Option<C<T>> {
        match (self.boundary, self.gauge) {
            (Boundary::Open, _) => None,
            (Boundary::Periodic, FluxGauge::Uniform) => Some(C::new(T::one(), T::zero())),
            (Boundary::Periodic, FluxGauge::WrapBond) => Some(cis(self.flux_theta * from_usize::<T>(self.len))),
        }
    }
}

pub fn build_hamiltonian<T: Real>(spec: &ModelSpec<T>) -> DenseMatrix<T> {
    let l = spec.len;
    let mut h = DenseMatrix::zeros(l);
    let bulk = spec.bulk_hoppings();
    let wrap = spec.wrap_phase();
    for (n, t) in bulk.iter() {
        for i in 0..l {
            let j = i + n;
            let fwd = if j < l {
                t
            } else if let Some(w) = wrap {
                t * w
            } else {
                continue;
            };
            let j = j % l;
            h[(i, j)] += fwd;
            h[(j, i)] += fwd.conj();
        }
    }
    for p in &spec.perturbations {
        h[(p.site_i - 1, p.site_j - 1)] += p.amplitude;
    }
    h
}

/// Moves the flux of a periodic chain onto the wrap bond via
/// `H -> U H U†` with `U = diag(e^{iθj})`.
pub fn apply_gauge_transform<T: Real>(spec: &ModelSpec<T>) -> Result<ModelSpec<T>> {
    if spec.boundary != Boundary::Periodic {
        return Err(Error::NotPeriodic);
    }
    if spec.flux_theta == T::zero() || spec.gauge == FluxGauge::WrapBond {
        return Ok(spec.clone());
    }
    let theta = spec.flux_theta;
    let perturbations = spec
        .perturbations
        .iter()
        .map(|p| {
            let d = from_usize::<T>(p.site_i) - from_usize::<T>(p.site_j);
            PerturbationTerm::new(p.site_i, p.site_j, p.amplitude * cis(theta * d))
        })
        .collect();
    Ok(ModelSpec { perturbations, gauge: FluxGauge::WrapBond, ..spec.clone() })
}

/// Checks `P conj(H) P = H` with `P: j -> L+1-j`.
pub fn is_pt_symmetric<T: Real>(spec: &ModelSpec<T>) -> bool {
    let h = build_hamiltonian(spec);
    let l = h.dim();
    let eps = tol::<T>(1e-12);
    (0..l).all(|a| (0..l).all(|b| (h[(l - 1 - a, l - 1 - b)].conj() - h[(a, b)]).norm() <= eps))
}

/// The concrete models used throughout the toolkit.
pub mod models {
    use super::*;

    pub fn open_chain<T: Real>(len: usize, t: T) -> Result<ModelSpec<T>> {
        ModelSpec::open(len, HoppingSet::nearest(t)?)
    }

    pub fn periodic_chain<T: Real>(len: usize, t: T, theta: T) -> Result<ModelSpec<T>> {
        ModelSpec::periodic(len, HoppingSet::nearest(t)?, theta)
    }

    /// Open chain with gain `i g` on the first site.
    pub fn gain_chain<T: Real>(len: usize, t: T, g: T) -> Result<ModelSpec<T>> {
        open_chain(len, t)?.with_perturbation(1, 1, C::new(T::zero(), g))
    }

    /// Flux ring with `V = g e^{iφ}|1⟩⟨1| + g e^{-iφ}|L⟩⟨L|`.
    pub fn flux_ring<T: Real>(len: usize, t: T, theta: T, g: T, phi: T) -> Result<ModelSpec<T>> {
        periodic_chain(len, t, theta)?.with_perturbation(1, 1, cis(phi) * g)?.with_perturbation(len, len, cis(-phi) * g)
    }

    /// Open chain with next-nearest hopping and `V = i g(|1⟩⟨1| - |L⟩⟨L|)`.
    pub fn nnn_chain<T: Real>(len: usize, t1: T, t2: T, g: T) -> Result<ModelSpec<T>> {
        ModelSpec::open(len, HoppingSet::real(&[t1, t2])?)?
            .with_perturbation(1, 1, C::new(T::zero(), g))?
            .with_perturbation(len, len, C::new(T::zero(), -g))
    }

    /// Open chain with next-nearest hopping and the inversion-symmetric
    /// non-Hermitian coupling `V = g(|1⟩⟨2| + |L⟩⟨L-1|)`.
    pub fn nnn_chain_edge_coupling<T: Real>(len: usize, t1: T, t2: T, g: T) -> Result<ModelSpec<T>> {
        ModelSpec::open(len, HoppingSet::real(&[t1, t2])?)?
            .with_perturbation(1, 2, C::new(g, T::zero()))?
            .with_perturbation(len, len - 1, C::new(g, T::zero()))
    }
}

#[cfg(test)]
mod tests {
    use super::models::*;
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C<f64> {
        C::new(re, im)
    }

    #[test]
    fn two_site_chain() {
        let h = build_hamiltonian(&open_chain(2, 1.0).unwrap());
        assert_eq!(h.as_slice(), &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
    }

    #[test]
    fn gain_on_first_site() {
        let h = build_hamiltonian(&gain_chain(3, 1.0, 2.0).unwrap());
        let want = DenseMatrix::from_rows(&[
            vec![c(0., 2.), c(1., 0.), c(0., 0.)],
            vec![c(1., 0.), c(0., 0.), c(1., 0.)],
            vec![c(0., 0.), c(1., 0.), c(0., 0.)],
        ])
        .unwrap();
        assert_eq!(h, want);
    }

    #[test]
    fn flux_ring_entries() {
        let h = build_hamiltonian(&periodic_chain(4, 1.0, PI / 8.0).unwrap());
        let f = cis(PI / 8.0);
        for (i, j, want) in [(1, 2, f), (2, 1, f.conj()), (4, 1, f), (1, 4, f.conj())] {
            assert!((h.site(i, j) - want).norm() < 1e-15, "H[{i}][{j}]");
        }
        assert_eq!(h.site(1, 3), c(0., 0.));
    }

    #[test]
    fn rejects_short_periodic_chain_and_bad_sites() {
        assert!(periodic_chain(2, 1.0, 0.0).is_err());
        assert!(ModelSpec::periodic(4, HoppingSet::real(&[1.0, 0.5]).unwrap(), 0.0).is_err());
        assert!(open_chain(5, 1.0).unwrap().with_perturbation(6, 1, c(1., 0.)).is_err());
        assert!(open_chain(5, 1.0).unwrap().with_perturbation(0, 1, c(1., 0.)).is_err());
        assert!(HoppingSet::new([(1, c(0., 0.))]).is_err());
    }

    #[test]
    fn flux_is_stored_modulo_two_pi() {
        let s = periodic_chain(10, 1.0, 2.0 * PI + 0.25).unwrap();
        assert!((s.flux_theta() - 0.25).abs() < 1e-12);
        let s = periodic_chain(10, 1.0, -0.25).unwrap();
        assert!((s.flux_theta() - (2.0 * PI - 0.25)).abs() < 1e-12);
    }

    #[test]
    fn gauge_transform_moves_flux_to_wrap_bond() {
        let s = periodic_chain(6, 1.0, PI / 6.0).unwrap();
        let h = build_hamiltonian(&apply_gauge_transform(&s).unwrap());
        for i in 1..6 {
            assert!((h.site(i, i + 1) - c(1., 0.)).norm() < 1e-14);
        }
        assert!((h.site(1, 6) - cis(-PI)).norm() < 1e-14);
        assert!((h.site(6, 1) - cis(PI)).norm() < 1e-14);
    }

    #[test]
    fn gauge_transform_identity_at_zero_flux() {
        let s = flux_ring(8, 1.0, 0.0, 0.3, 0.4).unwrap();
        assert_eq!(apply_gauge_transform(&s).unwrap(), s);
        assert!(apply_gauge_transform(&open_chain(5, 1.0).unwrap()).is_err());
    }

    #[test]
    fn gauge_transform_is_a_similarity() {
        let s = flux_ring(7, 1.0, 0.3, 0.5, 0.2).unwrap().with_perturbation(2, 5, c(0.1, -0.3)).unwrap();
        let h = build_hamiltonian(&s);
        let ht = build_hamiltonian(&apply_gauge_transform(&s).unwrap());
        let u = |a: usize| cis(0.3 * a as f64);
        let want = DenseMatrix::from_fn(7, |a, b| u(a + 1) * h[(a, b)] * u(b + 1).conj());
        assert!(ht.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn pt_symmetry_of_reference_models() {
        assert!(!is_pt_symmetric(&gain_chain(10, 1.0, 0.5).unwrap()));
        assert!(is_pt_symmetric(&nnn_chain(10, 1.0, 0.5, 0.7).unwrap()));
        assert!(is_pt_symmetric(&flux_ring(10, 1.0, 0.05, 0.7, 0.9).unwrap()));
        assert!(is_pt_symmetric(&nnn_chain_edge_coupling(10, 1.0, 0.5, 0.7).unwrap()));
    }

    #[test]
    fn hermitian_without_perturbation_or_flux() {
        let s = ModelSpec::periodic(9, HoppingSet::new([(1, c(1.0, 0.2)), (3, c(-0.4, 0.7))]).unwrap(), 0.0).unwrap();
        let h = build_hamiltonian(&s);
        assert_eq!(h.max_abs_diff(&h.adjoint()), 0.0);
    }

    #[test]
    fn determinant_of_small_matrices() {
        let m = DenseMatrix::from_rows(&[vec![c(2., 0.), c(0., 1.)], vec![c(0., -1.), c(3., 0.)]]).unwrap();
        assert!((m.determinant() - c(5., 0.)).norm() < 1e-14);
        let p = DenseMatrix::<f64>::from_real_rows(&[vec![0., 1., 0.], vec![0., 0., 1.], vec![1., 0., 0.]]).unwrap();
        assert!((p.determinant() - c(1., 0.)).norm() < 1e-14);
    }

    #[test]
    fn single_precision_assembly() {
        let h = build_hamiltonian(&flux_ring(6, 1.0f32, 0.1, 0.5, 0.3).unwrap());
        assert_eq!(h.dim(), 6);
        assert!(is_pt_symmetric(&flux_ring(6, 1.0f32, 0.1, 0.5, 0.3).unwrap()));
    }
}
