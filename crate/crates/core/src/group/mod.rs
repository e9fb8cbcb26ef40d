//! Normal-form group arithmetic for free groups, free abelian groups, and
//! free products thereof, with the standard symmetric generating set.

mod ball;
pub(crate) mod element;

pub use ball::{CayleyBall, DEFAULT_ADJACENCY_CAP, OUTSIDE};
pub use element::{inverse, multiply, GroupElement, Syllable};

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Structural description of a supported group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupSpec {
    Free { rank: usize },
    FreeAbelian { rank: usize },
    FreeProduct { factors: Vec<GroupSpec> },
}

impl GroupSpec {
    pub fn free(rank: usize) -> Self {
        GroupSpec::Free { rank }
    }

    pub fn abelian(rank: usize) -> Self {
        GroupSpec::FreeAbelian { rank }
    }

    pub fn product(factors: Vec<GroupSpec>) -> Self {
        GroupSpec::FreeProduct { factors }
    }

    fn validate(&self) -> Result<()> {
        match self {
            GroupSpec::Free { rank } | GroupSpec::FreeAbelian { rank } => {
                if *rank == 0 {
                    return Err(Error::InvalidSpec("rank must be >= 1".into()));
                }
                Ok(())
            }
            GroupSpec::FreeProduct { factors } => {
                if factors.len() < 2 {
                    return Err(Error::InvalidSpec(
                        "free product needs at least 2 factors".into(),
                    ));
                }
                factors.iter().try_for_each(|f| f.validate())
            }
        }
    }

    /// Parse the config grammar: `free(2)`, `abelian(2)`,
    /// `product(abelian(2), free(1))`. Nesting is allowed.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = SpecParser { text, pos: 0 };
        let spec = p.parse_spec()?;
        p.skip_ws();
        if p.pos != p.text.len() {
            return Err(Error::InvalidSpec(format!(
                "trailing input at byte {}: {:?}",
                p.pos,
                &p.text[p.pos..]
            )));
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupSpec::Free { rank } => write!(f, "free({rank})"),
            GroupSpec::FreeAbelian { rank } => write!(f, "abelian({rank})"),
            GroupSpec::FreeProduct { factors } => {
                write!(f, "product(")?;
                for (i, fac) in factors.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{fac}")?;
                }
                write!(f, ")")
            }
        }
    }
}

struct SpecParser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> SpecParser<'a> {
    fn skip_ws(&mut self) {
        while self.text[self.pos..].starts_with([' ', '\t']) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.text[self.pos..].starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn parse_usize(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len() && self.text.as_bytes()[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        self.text[start..self.pos]
            .parse()
            .map_err(|_| Error::InvalidSpec(format!("expected integer at byte {start}")))
    }

    fn parse_spec(&mut self) -> Result<GroupSpec> {
        self.skip_ws();
        if self.eat("free(") {
            let rank = self.parse_usize()?;
            if !self.eat(")") {
                return Err(Error::InvalidSpec("expected ')'".into()));
            }
            Ok(GroupSpec::Free { rank })
        } else if self.eat("abelian(") {
            let rank = self.parse_usize()?;
            if !self.eat(")") {
                return Err(Error::InvalidSpec("expected ')'".into()));
            }
            Ok(GroupSpec::FreeAbelian { rank })
        } else if self.eat("product(") {
            let mut factors = vec![self.parse_spec()?];
            while self.eat(",") {
                factors.push(self.parse_spec()?);
            }
            if !self.eat(")") {
                return Err(Error::InvalidSpec("expected ')'".into()));
            }
            Ok(GroupSpec::FreeProduct { factors })
        } else {
            Err(Error::InvalidSpec(format!(
                "expected free(..), abelian(..) or product(..) at byte {}",
                self.pos
            )))
        }
    }
}

/// One flattened leaf factor of the group.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Leaf {
    pub abelian: bool,
    pub rank: usize,
    /// Global index of this leaf's first base generator.
    pub first_gen: usize,
}

#[derive(Debug)]
struct GroupInner {
    spec: GroupSpec,
    leaves: Vec<Leaf>,
    /// Base generator -> leaf index.
    gen_leaf: Vec<u16>,
    /// Base generator -> leaf is abelian of rank >= 2 (syllables reorder).
    gen_sorted: Vec<bool>,
    gen_names: Vec<String>,
}

/// A validated group with its generator layout. Cheap to clone.
///
/// Nested free products are flattened for the normal-form machinery: the
/// free product is associative and the standard generating set (disjoint
/// union of leaf generators and inverses) is identical either way.
#[derive(Clone, Debug)]
pub struct Group(Arc<GroupInner>);

impl PartialEq for Group {
    fn eq(&self, other: &Self) -> bool {
        self.0.spec == other.0.spec
    }
}
impl Eq for Group {}

fn collect_leaves(spec: &GroupSpec, leaves: &mut Vec<Leaf>, next_gen: &mut usize) {
    match spec {
        GroupSpec::Free { rank } => {
            leaves.push(Leaf {
                abelian: false,
                rank: *rank,
                first_gen: *next_gen,
            });
            *next_gen += rank;
        }
        GroupSpec::FreeAbelian { rank } => {
            leaves.push(Leaf {
                abelian: true,
                rank: *rank,
                first_gen: *next_gen,
            });
            *next_gen += rank;
        }
        GroupSpec::FreeProduct { factors } => {
            for f in factors {
                collect_leaves(f, leaves, next_gen);
            }
        }
    }
}

const FREE_NAMES: &[u8] = b"abcdefghijklmnopqrstuvw";
const ABELIAN_NAMES: &[u8] = b"xyzwvu";

impl Group {
    pub fn new(spec: GroupSpec) -> Result<Self> {
        spec.validate()?;
        let mut leaves = Vec::new();
        let mut next_gen = 0;
        collect_leaves(&spec, &mut leaves, &mut next_gen);
        if next_gen > 120 {
            return Err(Error::InvalidSpec(format!(
                "too many generators ({next_gen}); at most 120 supported"
            )));
        }
        let mut gen_leaf = vec![0u16; next_gen];
        let mut gen_sorted = vec![false; next_gen];
        let mut gen_names = vec![String::new(); next_gen];
        let mut abelian_used = 0usize;
        for (li, leaf) in leaves.iter().enumerate() {
            for k in 0..leaf.rank {
                let g = leaf.first_gen + k;
                gen_leaf[g] = li as u16;
                gen_sorted[g] = leaf.abelian && leaf.rank >= 2;
                gen_names[g] = if leaf.abelian {
                    let idx = abelian_used + k;
                    if idx < ABELIAN_NAMES.len() {
                        (ABELIAN_NAMES[idx] as char).to_string()
                    } else {
                        format!("x{idx}")
                    }
                } else if g < FREE_NAMES.len() {
                    (FREE_NAMES[g] as char).to_string()
                } else {
                    format!("g{g}")
                };
            }
            if leaf.abelian {
                abelian_used += leaf.rank;
            }
        }
        Ok(Group(Arc::new(GroupInner {
            spec,
            leaves,
            gen_leaf,
            gen_sorted,
            gen_names,
        })))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Group::new(GroupSpec::parse(text)?)
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.0.spec
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.0.leaves
    }

    /// Number of base generators.
    pub fn n_gens(&self) -> usize {
        self.0.gen_leaf.len()
    }

    /// Number of directed generators (base generators and their inverses).
    pub fn n_dirgens(&self) -> usize {
        2 * self.n_gens()
    }

    pub fn leaf_of_gen(&self, g: u32) -> u16 {
        self.0.gen_leaf[g as usize]
    }

    /// Whether syllables of this generator's leaf are kept in sorted gen
    /// order (abelian leaves of rank >= 2).
    pub fn gen_is_sorted(&self, g: u32) -> bool {
        self.0.gen_sorted[g as usize]
    }

    pub fn gen_name(&self, g: u32) -> &str {
        &self.0.gen_names[g as usize]
    }

    pub fn gen_by_name(&self, name: &str) -> Option<u32> {
        self.0
            .gen_names
            .iter()
            .position(|n| n == name)
            .map(|g| g as u32)
    }

    /// Is the whole group amenable (no free-product branching and no free
    /// leaf of rank >= 2)? Everything else here is nonamenable.
    pub fn is_amenable(&self) -> bool {
        let leaves = self.leaves();
        if leaves.len() == 1 {
            let l = leaves[0];
            return l.abelian || l.rank == 1;
        }
        // Z/0 products do not occur; any product of >= 2 infinite factors
        // contains a free subgroup of rank 2.
        false
    }
}

/// Directed generator helpers: dirgen `2g` is the generator `g`,
/// dirgen `2g+1` is its inverse.
pub fn dirgen(gen: u32, inverse: bool) -> u32 {
    2 * gen + inverse as u32
}

pub fn dirgen_base(s: u32) -> u32 {
    s / 2
}

pub fn dirgen_is_inverse(s: u32) -> bool {
    s % 2 == 1
}

pub fn dirgen_inv(s: u32) -> u32 {
    s ^ 1
}

pub fn dirgen_exp(s: u32) -> i64 {
    if dirgen_is_inverse(s) {
        -1
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_roundtrip() {
        for text in ["free(2)", "abelian(2)", "product(abelian(2), free(1))"] {
            let spec = GroupSpec::parse(text).unwrap();
            assert_eq!(spec.to_string(), text);
        }
    }

    #[test]
    fn parse_rejects_bad_specs() {
        assert!(GroupSpec::parse("free(0)").is_err());
        assert!(GroupSpec::parse("product(free(2))").is_err());
        assert!(GroupSpec::parse("ring(3)").is_err());
        assert!(GroupSpec::parse("free(2) extra").is_err());
    }

    #[test]
    fn nested_products_flatten() {
        let g = Group::parse("product(product(free(1), free(1)), abelian(2))").unwrap();
        assert_eq!(g.leaves().len(), 3);
        assert_eq!(g.n_gens(), 4);
        assert!(!g.leaves()[0].abelian);
        assert!(g.leaves()[2].abelian);
    }

    #[test]
    fn generator_names_match_families() {
        let g = Group::parse("product(abelian(2), free(1))").unwrap();
        assert_eq!(g.gen_name(0), "x");
        assert_eq!(g.gen_name(1), "y");
        assert_eq!(g.gen_name(2), "c");
        let f = Group::parse("free(2)").unwrap();
        assert_eq!(f.gen_name(0), "a");
        assert_eq!(f.gen_name(1), "b");
    }
}
