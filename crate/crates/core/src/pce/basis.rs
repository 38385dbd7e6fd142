use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::poly::PolyFamily;
use crate::error::{Error, Result};

/// Label identifying one independent germ instance. Disturbance blocks are
/// tagged with the absolute time step of the disturbance they encode.
pub type Tag = i64;

/// One term of a germ block: a univariate polynomial in germ coordinate `germ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GermTerm {
    pub family: PolyFamily,
    pub degree: u32,
    pub germ: usize,
}

impl GermTerm {
    pub fn linear(family: PolyFamily, germ: usize) -> Self {
        Self {
            family,
            degree: 1,
            germ,
        }
    }
}

/// A basis polynomial stored symbolically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisFunction {
    pub family: PolyFamily,
    pub degree: u32,
    pub tag: Tag,
    pub germ: usize,
}

impl BasisFunction {
    pub const CONSTANT: BasisFunction = BasisFunction {
        family: PolyFamily::Constant,
        degree: 0,
        tag: 0,
        germ: 0,
    };

    pub fn from_term(term: GermTerm, tag: Tag) -> Self {
        Self {
            family: term.family,
            degree: term.degree,
            tag,
            germ: term.germ,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.family == PolyFamily::Constant
    }

    pub fn norm(&self) -> f64 {
        self.family.norm(self.degree)
    }

    pub fn eval(&self, germs: &BTreeMap<Tag, Vec<f64>>) -> Result<f64> {
        if self.is_constant() {
            return Ok(1.0);
        }
        let xi = germs
            .get(&self.tag)
            .and_then(|g| g.get(self.germ))
            .ok_or_else(|| {
                Error::arg(format!(
                    "no germ value for tag {} coordinate {}",
                    self.tag, self.germ
                ))
            })?;
        Ok(self.family.eval(self.degree, *xi))
    }
}

/// Ordered orthogonal basis: the constant, the initial-condition block, then
/// one disturbance block per horizon step in time order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PceBasis {
    functions: Vec<BasisFunction>,
    norms: Vec<f64>,
    lx: usize,
    block: Vec<GermTerm>,
    horizon_tags: Vec<Tag>,
}

impl PceBasis {
    /// Builds a basis from an explicit initial-condition block (without the
    /// constant), a disturbance block template and the horizon tags.
    pub fn new(
        x_block: Vec<BasisFunction>,
        block: Vec<GermTerm>,
        horizon_tags: Vec<Tag>,
    ) -> Result<Self> {
        if block.is_empty() {
            return Err(Error::arg("disturbance block must be non-empty (L_w >= 2)"));
        }
        if horizon_tags.is_empty() {
            return Err(Error::arg("horizon must be at least 1"));
        }
        if x_block.iter().any(|f| f.is_constant() || f.degree == 0) {
            return Err(Error::arg("initial-condition block holds a constant"));
        }
        if block.iter().any(|t| t.family == PolyFamily::Constant || t.degree == 0) {
            return Err(Error::arg("disturbance block holds a constant"));
        }
        let x_tags: std::collections::BTreeSet<Tag> = x_block.iter().map(|f| f.tag).collect();
        let mut seen = std::collections::BTreeSet::new();
        for &t in &horizon_tags {
            if x_tags.contains(&t) || !seen.insert(t) {
                return Err(Error::arg(format!("duplicate basis tag {t}")));
            }
        }
        let lx = x_block.len() + 1;
        let mut functions = Vec::with_capacity(lx + horizon_tags.len() * block.len());
        functions.push(BasisFunction::CONSTANT);
        functions.extend(x_block);
        for &t in &horizon_tags {
            functions.extend(block.iter().map(|&g| BasisFunction::from_term(g, t)));
        }
        let norms = functions.iter().map(BasisFunction::norm).collect();
        Ok(Self {
            functions,
            norms,
            lx,
            block,
            horizon_tags,
        })
    }

    /// Fresh basis whose initial-condition block is deterministic (`L_x = 1`),
    /// with disturbance blocks tagged `first_tag, first_tag + 1, ...`.
    pub fn fresh(block: Vec<GermTerm>, horizon: usize, first_tag: Tag) -> Result<Self> {
        let tags = (0..horizon as Tag).map(|r| first_tag + r).collect();
        Self::new(Vec::new(), block, tags)
    }

    /// Successor basis after a backup step: the first horizon block joins the
    /// initial-condition block and a new block tagged `new_tag` is appended.
    pub fn grow(&self, new_tag: Tag) -> Result<Self> {
        if self.functions.iter().any(|f| !f.is_constant() && f.tag == new_tag) {
            return Err(Error::arg(format!("tag {new_tag} already present")));
        }
        let mut functions = self.functions.clone();
        functions.extend(
            self.block
                .iter()
                .map(|&g| BasisFunction::from_term(g, new_tag)),
        );
        let mut norms = self.norms.clone();
        norms.extend(self.block.iter().map(|g| g.family.norm(g.degree)));
        let mut horizon_tags = self.horizon_tags[1..].to_vec();
        horizon_tags.push(new_tag);
        Ok(Self {
            functions,
            norms,
            lx: self.lx + self.block.len(),
            block: self.block.clone(),
            horizon_tags,
        })
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn lx(&self) -> usize {
        self.lx
    }

    pub fn lw(&self) -> usize {
        self.block.len() + 1
    }

    pub fn horizon(&self) -> usize {
        self.horizon_tags.len()
    }

    pub fn functions(&self) -> &[BasisFunction] {
        &self.functions
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn block(&self) -> &[GermTerm] {
        &self.block
    }

    pub fn horizon_tags(&self) -> &[Tag] {
        &self.horizon_tags
    }

    /// Index range of the block carrying `tag`, in the x-block or the horizon.
    pub fn tag_range(&self, tag: Tag) -> Option<Range<usize>> {
        let start = self
            .functions
            .iter()
            .position(|f| !f.is_constant() && f.tag == tag)?;
        let end = start
            + self.functions[start..]
                .iter()
                .take_while(|f| f.tag == tag && !f.is_constant())
                .count();
        Some(start..end)
    }

    /// Distinct tags of the initial-condition block, in basis order.
    pub fn x_tags(&self) -> Vec<Tag> {
        let mut tags: Vec<Tag> = Vec::new();
        for f in &self.functions[1..self.lx] {
            if tags.last() != Some(&f.tag) {
                tags.push(f.tag);
            }
        }
        tags
    }

    /// Evaluates every basis function at the given germ realisations.
    pub fn eval(&self, germs: &BTreeMap<Tag, Vec<f64>>) -> Result<Vec<f64>> {
        self.eval_prefix(self.len(), germs)
    }

    /// Evaluates the first `count` basis functions.
    pub fn eval_prefix(&self, count: usize, germs: &BTreeMap<Tag, Vec<f64>>) -> Result<Vec<f64>> {
        self.functions[..count.min(self.len())]
            .iter()
            .map(|f| f.eval(germs))
            .collect()
    }
}

/// Basis with an initial-condition block of `lx - 1` degree-one functions of
/// `family` sharing `x_tag`, and `n` disturbance blocks of `lw - 1` degree-one
/// functions starting at `w_start_tag`.
pub fn make_basis(
    lx: usize,
    lw: usize,
    n: usize,
    family: PolyFamily,
    x_tag: Tag,
    w_start_tag: Tag,
) -> Result<PceBasis> {
    if lx < 1 || lw < 2 || n < 1 {
        return Err(Error::arg(format!(
            "invalid basis sizes L_x={lx}, L_w={lw}, N={n}"
        )));
    }
    if family == PolyFamily::Constant {
        return Err(Error::arg("non-constant family required"));
    }
    let x_block = (0..lx - 1)
        .map(|g| BasisFunction::from_term(GermTerm::linear(family, g), x_tag))
        .collect();
    let block = (0..lw - 1).map(|g| GermTerm::linear(family, g)).collect();
    let tags = (0..n as Tag).map(|r| w_start_tag + r).collect();
    PceBasis::new(x_block, block, tags)
}

/// Input coefficient indices pinned to zero at predicted step `k`.
pub fn causality_zero_indices(k: usize, lx: usize, lw: usize, l: usize) -> Range<usize> {
    (lx + k * (lw - 1)).min(l)..l
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_sizes() {
        assert_eq!(make_basis(1, 2, 25, PolyFamily::Hermite, -1, 0).unwrap().len(), 26);
        let b = make_basis(1, 2, 1, PolyFamily::Hermite, -1, 0).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.functions()[0].is_constant());
        assert_eq!(b.functions()[1].tag, 0);
        assert_eq!(make_basis(3, 3, 2, PolyFamily::Legendre, -1, 0).unwrap().len(), 7);
    }

    #[test]
    fn invalid_sizes_rejected() {
        assert!(make_basis(0, 2, 1, PolyFamily::Hermite, -1, 0).is_err());
        assert!(make_basis(1, 1, 1, PolyFamily::Hermite, -1, 0).is_err());
        assert!(make_basis(1, 2, 0, PolyFamily::Hermite, -1, 0).is_err());
    }

    #[test]
    fn causality_examples() {
        assert_eq!(causality_zero_indices(0, 1, 2, 4), 1..4);
        assert_eq!(causality_zero_indices(1, 1, 2, 4), 2..4);
        assert_eq!(causality_zero_indices(2, 1, 2, 4), 3..4);
    }

    #[test]
    fn growth_appends_and_absorbs() {
        let b = make_basis(1, 2, 25, PolyFamily::Hermite, -1, 0).unwrap();
        let g = b.grow(25).unwrap();
        assert_eq!(g.len(), 27);
        assert_eq!(g.lx(), 2);
        assert_eq!(g.horizon_tags().first(), Some(&1));
        assert_eq!(&g.functions()[..26], b.functions());
        assert!(matches!(g.grow(3), Err(Error::InvalidArgument(_))));
        let mut cur = b;
        for q in 1..=5 {
            cur = cur.grow(24 + q as Tag).unwrap();
            assert_eq!(cur.len(), 1 + (25 + q));
            assert_eq!(cur.lx(), 1 + q);
        }
        assert_eq!(cur.x_tags(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn eval_examples() {
        let single = PolyFamily::Hermite;
        let b = make_basis(1, 2, 1, single, -1, 0).unwrap();
        let germs = BTreeMap::from([(0, vec![0.7])]);
        assert_eq!(b.eval(&germs).unwrap(), vec![1.0, 0.7]);
        assert_eq!(b.eval_prefix(1, &BTreeMap::new()).unwrap(), vec![1.0]);
        assert!(b.eval(&BTreeMap::new()).is_err());

        let p2 = PceBasis::new(
            Vec::new(),
            vec![GermTerm {
                family: PolyFamily::Legendre,
                degree: 2,
                germ: 0,
            }],
            vec![0],
        )
        .unwrap();
        assert_eq!(p2.eval(&BTreeMap::from([(0, vec![1.0])])).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn tag_ranges() {
        let b = make_basis(3, 3, 2, PolyFamily::Hermite, -1, 10).unwrap();
        assert_eq!(b.tag_range(-1), Some(1..3));
        assert_eq!(b.tag_range(10), Some(3..5));
        assert_eq!(b.tag_range(11), Some(5..7));
        assert_eq!(b.tag_range(12), None);
    }
}
