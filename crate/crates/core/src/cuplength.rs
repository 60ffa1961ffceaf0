//! Graded rings and modules given by multiplication tables over the
//! rationals, and the relative cup-length of a module.

use std::collections::BTreeMap;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loop_space::ModeWindow;

pub type Element = Vec<BigRational>;

fn zero_vec(n: usize) -> Element {
    vec![BigRational::zero(); n]
}

fn unit_vec(n: usize, i: usize) -> Element {
    let mut v = zero_vec(n);
    v[i] = BigRational::one();
    v
}

fn is_zero(v: &[BigRational]) -> bool {
    v.iter().all(Zero::is_zero)
}

fn sign(exp: i64) -> BigRational {
    if exp.rem_euclid(2) == 0 {
        BigRational::one()
    } else {
        -BigRational::one()
    }
}

fn axpy(acc: &mut [BigRational], c: &BigRational, v: &[BigRational]) {
    if c.is_zero() {
        return;
    }
    for (a, b) in acc.iter_mut().zip(v) {
        if !b.is_zero() {
            *a += c * b;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisElement {
    pub name: String,
    pub degree: i32,
}

/// Graded-commutative ring with a finite rational basis. `mult[i][j]` is the
/// coordinate vector of `e_i e_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedRing {
    basis: Vec<BasisElement>,
    unit: usize,
    mult: Vec<Vec<Element>>,
}

impl GradedRing {
    /// Builds and validates the ring; products with the unit are filled in.
    pub fn new(basis: Vec<BasisElement>, unit: usize, mut mult: Vec<Vec<Element>>) -> Result<Self> {
        let n = basis.len();
        if unit >= n || basis[unit].degree != 0 {
            return Err(Error::Schema(
                "the unit must be a degree-0 basis element".into(),
            ));
        }
        if mult.len() != n
            || mult
                .iter()
                .any(|r| r.len() != n || r.iter().any(|v| v.len() != n))
        {
            return Err(Error::Schema(format!(
                "multiplication table must be {n} x {n} x {n}"
            )));
        }
        for i in 0..n {
            mult[unit][i] = unit_vec(n, i);
            mult[i][unit] = unit_vec(n, i);
        }
        let ring = Self { basis, unit, mult };
        ring.validate()?;
        Ok(ring)
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        for b in &self.basis {
            if b.degree < 0 {
                return Err(Error::Schema(format!(
                    "ring class {} has negative degree",
                    b.name
                )));
            }
        }
        for i in 0..n {
            for j in 0..n {
                let deg = self.basis[i].degree + self.basis[j].degree;
                for (k, c) in self.mult[i][j].iter().enumerate() {
                    if !c.is_zero() && self.basis[k].degree != deg {
                        return Err(Error::Schema(format!(
                            "{} * {} has a component on {} of the wrong degree",
                            self.basis[i].name, self.basis[j].name, self.basis[k].name
                        )));
                    }
                }
                let swapped = self.mult[j][i]
                    .iter()
                    .map(|c| c * sign((self.degree(i) * self.degree(j)) as i64));
                if !self.mult[i][j].iter().cloned().eq(swapped) {
                    return Err(Error::Schema(format!(
                        "{} and {} do not graded-commute",
                        self.basis[i].name, self.basis[j].name
                    )));
                }
                for k in 0..n {
                    let left = self.mul(&self.mult[i][j], &unit_vec(n, k));
                    let right = self.mul(&unit_vec(n, i), &self.mult[j][k]);
                    if left != right {
                        return Err(Error::Schema(format!(
                            "product is not associative on ({}, {}, {})",
                            self.basis[i].name, self.basis[j].name, self.basis[k].name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[BasisElement] {
        &self.basis
    }

    pub fn degree(&self, i: usize) -> i32 {
        self.basis[i].degree
    }

    pub fn unit(&self) -> usize {
        self.unit
    }

    pub fn basis_product(&self, i: usize, j: usize) -> &Element {
        &self.mult[i][j]
    }

    pub fn mul(&self, a: &[BigRational], b: &[BigRational]) -> Element {
        let n = self.dim();
        let mut out = zero_vec(n);
        for (i, ai) in a.iter().enumerate().filter(|(_, c)| !c.is_zero()) {
            for (j, bj) in b.iter().enumerate().filter(|(_, c)| !c.is_zero()) {
                axpy(&mut out, &(ai * bj), &self.mult[i][j]);
            }
        }
        out
    }

    /// Basis indices of positive degree.
    pub fn positive(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.degree(i) > 0).collect()
    }

    /// The same ring with basis element `i` moved to position `perm[i]`.
    pub fn reindexed(&self, perm: &[usize]) -> Result<Self> {
        let n = self.dim();
        check_perm(perm, n)?;
        let mut basis = self.basis.clone();
        let mut mult = vec![vec![zero_vec(n); n]; n];
        for i in 0..n {
            basis[perm[i]] = self.basis[i].clone();
            for j in 0..n {
                mult[perm[i]][perm[j]] = permute_vec(&self.mult[i][j], perm);
            }
        }
        Self::new(basis, perm[self.unit], mult)
    }
}

fn check_perm(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n
        || perm
            .iter()
            .any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
    {
        return Err(Error::InvalidParameter(format!(
            "not a permutation of 0..{n}"
        )));
    }
    Ok(())
}

fn permute_vec(v: &[BigRational], perm: &[usize]) -> Element {
    let mut out = zero_vec(v.len());
    for (i, c) in v.iter().enumerate() {
        out[perm[i]] = c.clone();
    }
    out
}

/// Graded module over a [`GradedRing`]; `action[r][b]` is the coordinate
/// vector of `e_r . f_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedModule {
    basis: Vec<BasisElement>,
    action: Vec<Vec<Element>>,
}

impl GradedModule {
    /// Builds and validates the module; the unit action is filled in.
    pub fn new(
        ring: &GradedRing,
        basis: Vec<BasisElement>,
        mut action: Vec<Vec<Element>>,
    ) -> Result<Self> {
        let n = basis.len();
        if action.len() != ring.dim()
            || action
                .iter()
                .any(|r| r.len() != n || r.iter().any(|v| v.len() != n))
        {
            return Err(Error::Schema(format!(
                "action table must be {} x {n} x {n}",
                ring.dim()
            )));
        }
        for b in 0..n {
            action[ring.unit()][b] = unit_vec(n, b);
        }
        let m = Self { basis, action };
        m.validate(ring)?;
        Ok(m)
    }

    pub fn zero(ring: &GradedRing) -> Self {
        Self {
            basis: Vec::new(),
            action: vec![Vec::new(); ring.dim()],
        }
    }

    /// The ring acting on itself with all degrees raised by `shift`.
    pub fn free(ring: &GradedRing, shift: i32) -> Self {
        let basis = ring
            .basis()
            .iter()
            .map(|b| BasisElement {
                name: format!("{}*a", b.name),
                degree: b.degree + shift,
            })
            .collect();
        Self {
            basis,
            action: ring.mult.clone(),
        }
    }

    fn validate(&self, ring: &GradedRing) -> Result<()> {
        let n = self.dim();
        for r in 0..ring.dim() {
            for b in 0..n {
                let deg = ring.degree(r) + self.basis[b].degree;
                for (k, c) in self.action[r][b].iter().enumerate() {
                    if !c.is_zero() && self.basis[k].degree != deg {
                        return Err(Error::Schema(format!(
                            "{} . {} has a component on {} of the wrong degree",
                            ring.basis()[r].name,
                            self.basis[b].name,
                            self.basis[k].name
                        )));
                    }
                }
                for s in 0..ring.dim() {
                    let left = self.act(&ring.mult[r][s], &unit_vec(n, b));
                    let right = self.act(&unit_vec(ring.dim(), r), &self.action[s][b]);
                    if left != right {
                        return Err(Error::Schema(format!(
                            "action is not associative on ({}, {}, {})",
                            ring.basis()[r].name,
                            ring.basis()[s].name,
                            self.basis[b].name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[BasisElement] {
        &self.basis
    }

    pub fn basis_action(&self, r: usize, b: usize) -> &Element {
        &self.action[r][b]
    }

    pub fn act(&self, beta: &[BigRational], alpha: &[BigRational]) -> Element {
        let mut out = zero_vec(self.dim());
        for (r, c) in beta.iter().enumerate().filter(|(_, c)| !c.is_zero()) {
            for (b, a) in alpha.iter().enumerate().filter(|(_, a)| !a.is_zero()) {
                axpy(&mut out, &(c * a), &self.action[r][b]);
            }
        }
        out
    }

    /// Reindexes ring (`ring_perm`) and module (`perm`) bases consistently.
    pub fn reindexed(
        &self,
        ring: &GradedRing,
        ring_perm: &[usize],
        perm: &[usize],
    ) -> Result<(GradedRing, Self)> {
        let n = self.dim();
        check_perm(perm, n)?;
        let new_ring = ring.reindexed(ring_perm)?;
        let mut basis = self.basis.clone();
        let mut action = vec![vec![zero_vec(n); n]; ring.dim()];
        for r in 0..ring.dim() {
            for b in 0..n {
                basis[perm[b]] = self.basis[b].clone();
                action[ring_perm[r]][perm[b]] = permute_vec(&self.action[r][b], perm);
            }
        }
        let module = Self::new(&new_ring, basis, action)?;
        Ok((new_ring, module))
    }

    /// Module over `map.source` obtained through a ring map into this
    /// module's ring.
    pub fn restrict(&self, map: &RingMap) -> Result<Self> {
        let action = (0..map.source.dim())
            .map(|r| {
                (0..self.dim())
                    .map(|b| self.act(&map.images[r], &unit_vec(self.dim(), b)))
                    .collect()
            })
            .collect();
        Self::new(&map.source, self.basis.clone(), action)
    }
}

/// Ring homomorphism given by the images of the source basis.
#[derive(Clone, Debug)]
pub struct RingMap {
    pub source: GradedRing,
    pub target: GradedRing,
    pub images: Vec<Element>,
}

impl RingMap {
    pub fn new(source: GradedRing, target: GradedRing, images: Vec<Element>) -> Result<Self> {
        if images.len() != source.dim() || images.iter().any(|v| v.len() != target.dim()) {
            return Err(Error::Dimension(
                "ring map images have the wrong shape".into(),
            ));
        }
        let map = Self {
            source,
            target,
            images,
        };
        let n = map.source.dim();
        if map.images[map.source.unit()] != unit_vec(map.target.dim(), map.target.unit()) {
            return Err(Error::Schema("ring map does not preserve the unit".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let lhs = map.apply(&map.source.mult[i][j]);
                let rhs = map.target.mul(&map.images[i], &map.images[j]);
                if lhs != rhs {
                    return Err(Error::Schema("ring map is not multiplicative".into()));
                }
            }
            for (k, c) in map.images[i].iter().enumerate() {
                if !c.is_zero() && map.target.degree(k) != map.source.degree(i) {
                    return Err(Error::Schema("ring map does not preserve degrees".into()));
                }
            }
        }
        Ok(map)
    }

    pub fn apply(&self, v: &[BigRational]) -> Element {
        let mut out = zero_vec(self.target.dim());
        for (i, c) in v.iter().enumerate() {
            axpy(&mut out, c, &self.images[i]);
        }
        out
    }

    pub fn is_surjective(&self) -> bool {
        rank(self.images.clone()) == self.target.dim()
    }
}

/// Rank by fraction-exact Gaussian elimination.
pub fn rank(mut rows: Vec<Element>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let pivot = rows[r][c].clone();
        for i in 0..rows.len() {
            if i != r && !rows[i][c].is_zero() {
                let f = &rows[i][c] / &pivot;
                let pr = rows[r].clone();
                for (a, b) in rows[i].iter_mut().zip(&pr) {
                    *a -= &f * b;
                }
            }
        }
        r += 1;
    }
    r
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CupVariant {
    /// Products of possibly different positive-degree classes.
    #[default]
    General,
    /// Powers of one positive-degree class.
    SinglePower,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CupWitness {
    /// Module basis element `alpha_0`.
    pub alpha: String,
    /// Ring classes `beta_1, ..., beta_{k-1}`, applied right to left.
    pub betas: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CuplengthReport {
    pub label: String,
    pub cuplength: usize,
    pub variant: CupVariant,
    pub ring_dim: usize,
    pub module_dim: usize,
    pub witness: Option<CupWitness>,
}

/// Longest chain `p_1 . (p_2 . ( ... p_m . f_b))` of positive basis classes
/// acting nonzero, found by depth-first search over all basis sequences.
fn longest_chain(ring: &GradedRing, module: &GradedModule) -> Option<(usize, Vec<usize>)> {
    let pos = ring.positive();
    let n = module.dim();
    let mut best: Option<(usize, Vec<usize>)> = None;
    fn dfs(
        ring: &GradedRing,
        module: &GradedModule,
        pos: &[usize],
        v: &Element,
        chain: &mut Vec<usize>,
        best: &mut Vec<usize>,
    ) {
        if chain.len() > best.len() {
            *best = chain.clone();
        }
        for &p in pos {
            let w = module.act(&unit_vec(ring.dim(), p), v);
            if !is_zero(&w) {
                chain.push(p);
                dfs(ring, module, pos, &w, chain, best);
                chain.pop();
            }
        }
    }
    for b in 0..n {
        let mut chain = Vec::new();
        let mut found = Vec::new();
        dfs(ring, module, &pos, &unit_vec(n, b), &mut chain, &mut found);
        if best.as_ref().is_none_or(|(_, c)| found.len() > c.len()) {
            best = Some((b, found));
        }
    }
    best
}

/// Longest nonzero `beta^m . alpha` for a single positive class `beta`, over
/// the basis classes and a generic combination of them.
fn longest_power(ring: &GradedRing, module: &GradedModule) -> Option<(usize, Vec<usize>)> {
    let pos = ring.positive();
    let n = module.dim();
    let mut candidates: Vec<(Element, Option<usize>)> = pos
        .iter()
        .map(|&p| (unit_vec(ring.dim(), p), Some(p)))
        .collect();
    let mut generic = zero_vec(ring.dim());
    for (i, &p) in pos.iter().enumerate() {
        generic[p] = BigRational::from_integer(BigInt::from(2 * i + 3));
    }
    if !pos.is_empty() {
        candidates.push((generic, None));
    }
    let mut best: Option<(usize, Vec<usize>)> = None;
    for b in 0..n {
        let mut len = 0;
        let mut who = Vec::new();
        for (beta, idx) in &candidates {
            let mut v = unit_vec(n, b);
            let mut m = 0;
            loop {
                let w = module.act(beta, &v);
                if is_zero(&w) {
                    break;
                }
                v = w;
                m += 1;
                if m > n + 1 {
                    // a nilpotent class cannot act this long on a finite graded module
                    break;
                }
            }
            if m > len {
                len = m;
                who = vec![idx.unwrap_or(usize::MAX); m];
            }
        }
        if best.as_ref().is_none_or(|(_, c)| len > c.len()) {
            best = Some((b, who));
        }
    }
    best
}

/// Relative cup-length: 0 for the zero module, otherwise one more than the
/// longest nonzero product of positive-degree classes acting on the module.
pub fn relative_cuplength(
    ring: &GradedRing,
    module: &GradedModule,
    variant: CupVariant,
    label: &str,
) -> CuplengthReport {
    let found = match variant {
        CupVariant::General => longest_chain(ring, module),
        CupVariant::SinglePower => longest_power(ring, module),
    };
    let name = |i: usize| {
        if i == usize::MAX {
            "generic".to_string()
        } else {
            ring.basis()[i].name.clone()
        }
    };
    let (cuplength, witness) = match found {
        None => (0, None),
        Some((b, chain)) => (
            chain.len() + 1,
            Some(CupWitness {
                alpha: module.basis()[b].name.clone(),
                betas: chain.into_iter().map(name).collect(),
            }),
        ),
    };
    CuplengthReport {
        label: label.to_string(),
        cuplength,
        variant,
        ring_dim: ring.dim(),
        module_dim: module.dim(),
        witness,
    }
}

/// `Q[u] / u^{m+1}` with `|u| = 2`.
pub fn cp_ring(m: usize) -> GradedRing {
    let n = m + 1;
    let basis = (0..n)
        .map(|i| BasisElement {
            name: if i == 0 { "1".into() } else { format!("u^{i}") },
            degree: 2 * i as i32,
        })
        .collect();
    let mut mult = vec![vec![zero_vec(n); n]; n];
    for (i, row) in mult.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if i + j < n {
                v[i + j] = BigRational::one();
            }
        }
    }
    GradedRing::new(basis, 0, mult).expect("truncated polynomial ring is valid")
}

/// A ring together with a module over it.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexPairFixture {
    pub label: String,
    pub ring: GradedRing,
    pub module: GradedModule,
    pub expected_cuplength: usize,
}

impl IndexPairFixture {
    pub fn cuplength(&self) -> CuplengthReport {
        relative_cuplength(&self.ring, &self.module, CupVariant::General, &self.label)
    }
}

/// Cohomology of the index pair around the sphere of unit loops: a free
/// rank-one module over `H*(CP^n)` raised by one degree.
pub fn cp_index_pair(n: usize) -> IndexPairFixture {
    let ring = cp_ring(n);
    let module = GradedModule::free(&ring, 1);
    IndexPairFixture {
        label: format!("cp{n}_suspended"),
        ring,
        module,
        expected_cuplength: n + 1,
    }
}

/// Sphere spectrum: one class of degree `d` over the scalars.
pub fn sphere_fixture(d: i32) -> IndexPairFixture {
    let ring = cp_ring(0);
    let module = GradedModule::free(&ring, d);
    IndexPairFixture {
        label: format!("sphere{d}"),
        ring,
        module,
        expected_cuplength: 1,
    }
}

/// A nonzero module on which the positive part of the ring acts trivially.
pub fn trivial_action_fixture(n: usize) -> IndexPairFixture {
    let ring = cp_ring(n);
    let basis = vec![BasisElement {
        name: "a".into(),
        degree: 0,
    }];
    let action = vec![vec![zero_vec(1)]; ring.dim()];
    let module = GradedModule::new(&ring, basis, action).expect("trivial action is valid");
    IndexPairFixture {
        label: format!("trivial_over_cp{n}"),
        ring,
        module,
        expected_cuplength: 1,
    }
}

pub fn zero_fixture(n: usize) -> IndexPairFixture {
    let ring = cp_ring(n);
    let module = GradedModule::zero(&ring);
    IndexPairFixture {
        label: format!("zero_over_cp{n}"),
        ring,
        module,
        expected_cuplength: 0,
    }
}

/// Koszul-signed tensor product of rings.
pub fn tensor_rings(a: &GradedRing, b: &GradedRing) -> GradedRing {
    let (na, nb) = (a.dim(), b.dim());
    let n = na * nb;
    let idx = |i: usize, j: usize| i * nb + j;
    let mut basis = Vec::with_capacity(n);
    for x in a.basis() {
        for y in b.basis() {
            basis.push(BasisElement {
                name: format!("{}(x){}", x.name, y.name),
                degree: x.degree + y.degree,
            });
        }
    }
    let mut mult = vec![vec![zero_vec(n); n]; n];
    for i in 0..na {
        for j in 0..nb {
            for k in 0..na {
                for l in 0..nb {
                    let s = sign((b.degree(j) * a.degree(k)) as i64);
                    let out = &mut mult[idx(i, j)][idx(k, l)];
                    for (p, cp) in a.mult[i][k]
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| !c.is_zero())
                    {
                        for (q, cq) in b.mult[j][l]
                            .iter()
                            .enumerate()
                            .filter(|(_, c)| !c.is_zero())
                        {
                            out[idx(p, q)] += &s * cp * cq;
                        }
                    }
                }
            }
        }
    }
    GradedRing::new(basis, idx(a.unit(), b.unit()), mult)
        .expect("tensor product of valid rings is valid")
}

/// Koszul-signed tensor product of modules over [`tensor_rings`].
pub fn tensor_modules(
    ra: &GradedRing,
    ma: &GradedModule,
    rb: &GradedRing,
    mb: &GradedModule,
) -> Result<(GradedRing, GradedModule)> {
    let ring = tensor_rings(ra, rb);
    let (na, nb) = (ma.dim(), mb.dim());
    let n = na * nb;
    let mut basis = Vec::with_capacity(n);
    for x in ma.basis() {
        for y in mb.basis() {
            basis.push(BasisElement {
                name: format!("{}(x){}", x.name, y.name),
                degree: x.degree + y.degree,
            });
        }
    }
    let mut action = vec![vec![zero_vec(n); n]; ring.dim()];
    for r in 0..ra.dim() {
        for s in 0..rb.dim() {
            for i in 0..na {
                for j in 0..nb {
                    let sg = sign((rb.degree(s) * ma.basis()[i].degree) as i64);
                    let out = &mut action[r * rb.dim() + s][i * nb + j];
                    for (p, cp) in ma.action[r][i]
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| !c.is_zero())
                    {
                        for (q, cq) in mb.action[s][j]
                            .iter()
                            .enumerate()
                            .filter(|(_, c)| !c.is_zero())
                        {
                            out[p * nb + q] += &sg * cp * cq;
                        }
                    }
                }
            }
        }
    }
    let module = GradedModule::new(&ring, basis, action)?;
    Ok((ring, module))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductReport {
    pub left: usize,
    pub right: usize,
    /// Cup-length of the tensor product, by exhaustive search.
    pub product: usize,
    /// `left * right`.
    pub formula_value: usize,
    pub formula_holds: bool,
    /// `left + right - 1` when both are positive, else 0.
    pub additive_value: usize,
}

pub fn product_cuplength(a: &IndexPairFixture, b: &IndexPairFixture) -> Result<ProductReport> {
    let (ring, module) = tensor_modules(&a.ring, &a.module, &b.ring, &b.module)?;
    let label = format!("{}(x){}", a.label, b.label);
    let left = a.cuplength().cuplength;
    let right = b.cuplength().cuplength;
    let product = relative_cuplength(&ring, &module, CupVariant::General, &label).cuplength;
    let formula_value = left * right;
    Ok(ProductReport {
        left,
        right,
        product,
        formula_value,
        formula_holds: product == formula_value,
        additive_value: if left == 0 || right == 0 {
            0
        } else {
            left + right - 1
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorseCheck {
    pub cuplength: usize,
    pub decomposition_size: usize,
    pub pass: bool,
}

/// A Morse decomposition has at least as many sets as the cup-length.
pub fn morse_lower_bound_check(cuplength: usize, decomposition_size: usize) -> MorseCheck {
    MorseCheck {
        cuplength,
        decomposition_size,
        pass: decomposition_size >= cuplength,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuspensionReport {
    pub from: [i32; 2],
    pub to: [i32; 2],
    pub dim: usize,
    /// Number of real coordinates added.
    pub suspension_dim: usize,
    pub cuplength_before: usize,
    pub cuplength_after: usize,
    pub cuplength_unchanged: bool,
}

/// Records the suspension implied by growing the mode window from `from` to
/// `to` alongside the cup-lengths computed on both.
pub fn suspension_bookkeeping(
    before: &CuplengthReport,
    after: &CuplengthReport,
    from: &ModeWindow,
    to: &ModeWindow,
) -> Result<SuspensionReport> {
    if from.dim() != to.dim() {
        return Err(Error::Dimension(format!(
            "window pair lives in R^{} and R^{}",
            from.dim(),
            to.dim()
        )));
    }
    if !to.contains_window(from) {
        return Err(Error::Range(
            "the larger window must contain the smaller one".into(),
        ));
    }
    let added = (from.k_min() - to.k_min()) + (to.k_max() - from.k_max());
    Ok(SuspensionReport {
        from: [from.k_min(), from.k_max()],
        to: [to.k_min(), to.k_max()],
        dim: from.dim(),
        suspension_dim: added as usize * from.dim(),
        cuplength_before: before.cuplength,
        cuplength_after: after.cuplength,
        cuplength_unchanged: before.cuplength == after.cuplength,
    })
}

/// Rational coefficient given as an integer or a string such as `"-3/2"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Int(i64),
    Text(String),
}

impl Coefficient {
    fn value(&self) -> Result<BigRational> {
        match self {
            Coefficient::Int(i) => Ok(BigRational::from_integer(BigInt::from(*i))),
            Coefficient::Text(s) => BigRational::from_str(s.trim())
                .map_err(|e| Error::Schema(format!("bad rational coefficient {s:?}: {e}"))),
        }
    }
}

/// `(i, j, k, c)`: the product of basis `i` and `j` has coefficient `c` on `k`.
pub type TableEntry = (usize, usize, usize, Coefficient);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingTable {
    pub basis: Vec<BasisElement>,
    #[serde(default)]
    pub unit: usize,
    pub products: Vec<TableEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleTable {
    pub basis: Vec<BasisElement>,
    /// `(r, b, k, c)`: ring basis `r` on module basis `b` has coefficient `c` on `k`.
    pub action: Vec<TableEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureFile {
    pub label: String,
    pub ring: RingTable,
    pub module: ModuleTable,
    pub expected_cuplength: usize,
}

fn fill(entries: &[TableEntry], rows: usize, n: usize, what: &str) -> Result<Vec<Vec<Element>>> {
    let mut t = vec![vec![zero_vec(n); n]; rows];
    let mut seen = BTreeMap::new();
    for (i, j, k, c) in entries {
        if *i >= rows || *j >= n || *k >= n {
            return Err(Error::Schema(format!(
                "{what} entry ({i}, {j}, {k}) is out of range"
            )));
        }
        if seen.insert((*i, *j, *k), ()).is_some() {
            return Err(Error::Schema(format!(
                "{what} entry ({i}, {j}, {k}) is repeated"
            )));
        }
        t[*i][*j][*k] = c.value()?;
    }
    Ok(t)
}

impl FixtureFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("cup-length fixture: {e}")))
    }

    pub fn build(&self) -> Result<IndexPairFixture> {
        let n = self.ring.basis.len();
        let mult = fill(&self.ring.products, n, n, "product")?;
        let ring = GradedRing::new(self.ring.basis.clone(), self.ring.unit, mult)?;
        let m = self.module.basis.len();
        if self.module.action.iter().any(|e| e.0 >= n) {
            return Err(Error::Schema(
                "action entry names a ring class out of range".into(),
            ));
        }
        let mut action = vec![vec![zero_vec(m); m]; n];
        for (i, j, k, c) in &self.module.action {
            if *j >= m || *k >= m {
                return Err(Error::Schema(format!(
                    "action entry ({i}, {j}, {k}) is out of range"
                )));
            }
            action[*i][*j][*k] = c.value()?;
        }
        let module = GradedModule::new(&ring, self.module.basis.clone(), action)?;
        Ok(IndexPairFixture {
            label: self.label.clone(),
            ring,
            module,
            expected_cuplength: self.expected_cuplength,
        })
    }

    /// Table form of a fixture; coefficients are written as reduced fractions.
    pub fn from_fixture(f: &IndexPairFixture) -> Self {
        let entries = |t: &Vec<Vec<Element>>| -> Vec<TableEntry> {
            let mut out = Vec::new();
            for (i, row) in t.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    for (k, c) in v.iter().enumerate().filter(|(_, c)| !c.is_zero()) {
                        let coeff = if c.is_integer()
                            && c.abs() < BigRational::from_integer(BigInt::from(i64::MAX))
                        {
                            Coefficient::Int(c.to_integer().try_into().expect("bounded"))
                        } else {
                            Coefficient::Text(c.to_string())
                        };
                        out.push((i, j, k, coeff));
                    }
                }
            }
            out
        };
        FixtureFile {
            label: f.label.clone(),
            ring: RingTable {
                basis: f.ring.basis.clone(),
                unit: f.ring.unit,
                products: entries(&f.ring.mult),
            },
            module: ModuleTable {
                basis: f.module.basis.clone(),
                action: entries(&f.module.action),
            },
            expected_cuplength: f.expected_cuplength,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent route: dimension of the span of all `k`-fold positive
    /// actions, iterated until it vanishes.
    fn span_cuplength(ring: &GradedRing, module: &GradedModule) -> usize {
        let n = module.dim();
        if n == 0 {
            return 0;
        }
        let mut span: Vec<Element> = (0..n).map(|b| unit_vec(n, b)).collect();
        let mut k = 0;
        loop {
            let next: Vec<Element> = ring
                .positive()
                .iter()
                .flat_map(|&p| span.iter().map(move |v| (p, v)))
                .map(|(p, v)| module.act(&unit_vec(ring.dim(), p), v))
                .collect();
            if next.is_empty() || rank(next.clone()) == 0 {
                return k + 1;
            }
            span = next;
            k += 1;
        }
    }

    #[test]
    fn cp_ring_shapes() {
        assert_eq!(cp_ring(0).dim(), 1);
        assert!(cp_ring(0).positive().is_empty());
        let r = cp_ring(2);
        assert_eq!(r.dim(), 3);
        let u = unit_vec(3, 1);
        let u2 = r.mul(&u, &u);
        assert!(!is_zero(&u2));
        assert!(is_zero(&r.mul(&u2, &u)));
    }

    #[test]
    fn definition_cases() {
        assert_eq!(zero_fixture(3).cuplength().cuplength, 0);
        assert_eq!(trivial_action_fixture(2).cuplength().cuplength, 1);
        assert_eq!(sphere_fixture(3).cuplength().cuplength, 1);
        for n in 0..=5 {
            let f = cp_index_pair(n);
            let rep = f.cuplength();
            assert_eq!(rep.cuplength, n + 1);
            assert_eq!(span_cuplength(&f.ring, &f.module), n + 1);
            let single = relative_cuplength(&f.ring, &f.module, CupVariant::SinglePower, "x");
            assert_eq!(single.cuplength, n + 1);
        }
    }

    #[test]
    fn witness_is_a_nonzero_product() {
        let f = cp_index_pair(3);
        let w = f.cuplength().witness.unwrap();
        assert_eq!(w.betas.len(), 3);
        assert_eq!(w.alpha, "1*a");
    }

    #[test]
    fn invalid_tables_are_rejected() {
        let basis = vec![
            BasisElement {
                name: "1".into(),
                degree: 0,
            },
            BasisElement {
                name: "x".into(),
                degree: 1,
            },
            BasisElement {
                name: "y".into(),
                degree: 2,
            },
        ];
        let mut mult = vec![vec![zero_vec(3); 3]; 3];
        // x * x = y, but odd classes must square to zero with rational coefficients
        mult[1][1][2] = BigRational::one();
        assert!(GradedRing::new(basis.clone(), 0, mult.clone()).is_err());
        mult[1][1][2] = BigRational::zero();
        mult[1][2][1] = BigRational::one();
        assert!(GradedRing::new(basis, 0, mult).is_err());
    }

    #[test]
    fn generic_power_reaches_mixed_product() {
        // Q[u, v] / (u^2, v^2): u v is the only length-2 product
        let a = cp_ring(1);
        let (ring, module) = tensor_modules(
            &a,
            &GradedModule::free(&a, 0),
            &a,
            &GradedModule::free(&a, 0),
        )
        .unwrap();
        assert_eq!(
            relative_cuplength(&ring, &module, CupVariant::General, "g").cuplength,
            3
        );
        assert_eq!(
            relative_cuplength(&ring, &module, CupVariant::SinglePower, "s").cuplength,
            3
        );
        assert_eq!(span_cuplength(&ring, &module), 3);
    }

    #[test]
    fn products_are_additive_not_multiplicative() {
        let r = product_cuplength(&cp_index_pair(1), &cp_index_pair(2)).unwrap();
        assert_eq!((r.left, r.right, r.product, r.additive_value), (2, 3, 4, 4));
        assert!(!r.formula_holds);
        let r = product_cuplength(&sphere_fixture(0), &cp_index_pair(3)).unwrap();
        assert_eq!(r.product, 4);
        assert!(r.formula_holds);
        let r = product_cuplength(&zero_fixture(1), &cp_index_pair(3)).unwrap();
        assert_eq!(r.product, 0);
        assert!(r.formula_holds);
    }

    #[test]
    fn reindexing_keeps_cuplength() {
        let f = cp_index_pair(3);
        let (r, m) = f
            .module
            .reindexed(&f.ring, &[2, 0, 3, 1], &[3, 1, 0, 2])
            .unwrap();
        assert_eq!(
            relative_cuplength(&r, &m, CupVariant::General, "p").cuplength,
            4
        );
    }

    #[test]
    fn restriction_along_surjection() {
        let src = cp_ring(4);
        let tgt = cp_ring(2);
        let images = (0..5)
            .map(|i| if i < 3 { unit_vec(3, i) } else { zero_vec(3) })
            .collect();
        let map = RingMap::new(src, tgt.clone(), images).unwrap();
        assert!(map.is_surjective());
        let m = GradedModule::free(&tgt, 1);
        let restricted = m.restrict(&map).unwrap();
        let before = relative_cuplength(&tgt, &m, CupVariant::General, "b").cuplength;
        let after =
            relative_cuplength(&map.source, &restricted, CupVariant::General, "a").cuplength;
        assert!(after >= before);
    }

    #[test]
    fn morse_gate() {
        assert!(!morse_lower_bound_check(3, 2).pass);
        assert!(morse_lower_bound_check(2, 2).pass);
        assert!(morse_lower_bound_check(0, 0).pass);
    }

    #[test]
    fn suspension_dimension() {
        let rep = cp_index_pair(1).cuplength();
        let a = ModeWindow::symmetric(4, 4).unwrap();
        let b = ModeWindow::symmetric(6, 4).unwrap();
        let s = suspension_bookkeeping(&rep, &rep, &a, &b).unwrap();
        assert_eq!(s.suspension_dim, 16);
        assert!(s.cuplength_unchanged);
        assert_eq!(
            suspension_bookkeeping(&rep, &rep, &a, &a)
                .unwrap()
                .suspension_dim,
            0
        );
        let c = ModeWindow::symmetric(6, 6).unwrap();
        assert!(suspension_bookkeeping(&rep, &rep, &a, &c).is_err());
    }

    #[test]
    fn json_round_trip() {
        let f = cp_index_pair(2);
        let file = FixtureFile::from_fixture(&f);
        let text = serde_json::to_string(&file).unwrap();
        let back = FixtureFile::from_json(&text).unwrap().build().unwrap();
        assert_eq!(back, f);
        let bad = text.replace(
            "\"expected_cuplength\"",
            "\"extra\":1,\"expected_cuplength\"",
        );
        assert!(FixtureFile::from_json(&bad).is_err());
        let frac = r#"{"label":"h","ring":{"basis":[{"name":"1","degree":0}],"products":[]},
            "module":{"basis":[{"name":"a","degree":0}],"action":[[0,0,0,"1/1"]]},"expected_cuplength":1}"#;
        assert_eq!(
            FixtureFile::from_json(frac)
                .unwrap()
                .build()
                .unwrap()
                .cuplength()
                .cuplength,
            1
        );
    }
}
