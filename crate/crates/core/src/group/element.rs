use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::group::{dirgen, dirgen_base, dirgen_exp, Group};

/// One run of a single generator in a normal form: `gen^exp`, `exp != 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Syllable {
    pub gen: u32,
    pub exp: i64,
}

/// A group element in normal form.
///
/// - free leaves: adjacent syllables use distinct generators;
/// - abelian leaves of rank >= 2: syllables of a block are in ascending
///   generator order;
/// - free products: consecutive blocks belong to distinct leaves.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct GroupElement {
    syllables: Vec<Syllable>,
}

impl GroupElement {
    pub fn identity() -> Self {
        GroupElement::default()
    }

    pub fn is_identity(&self) -> bool {
        self.syllables.is_empty()
    }

    pub fn syllables(&self) -> &[Syllable] {
        &self.syllables
    }

    pub fn from_syllables(group: &Group, syllables: Vec<Syllable>) -> Result<Self> {
        let e = GroupElement { syllables };
        e.validate(group)?;
        Ok(e)
    }

    /// Single generator power, normalized.
    pub fn generator_power(group: &Group, gen: u32, exp: i64) -> Result<Self> {
        if gen as usize >= group.n_gens() {
            return Err(Error::MalformedElement(format!("unknown generator {gen}")));
        }
        if exp == 0 {
            return Ok(GroupElement::identity());
        }
        Ok(GroupElement {
            syllables: vec![Syllable { gen, exp }],
        })
    }

    pub fn word_length(&self) -> u64 {
        self.syllables.iter().map(|s| s.exp.unsigned_abs()).sum()
    }

    pub fn validate(&self, group: &Group) -> Result<()> {
        for pair in self.syllables.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a.gen as usize >= group.n_gens() || b.gen as usize >= group.n_gens() {
                return Err(Error::MalformedElement("generator out of range".into()));
            }
            if a.gen == b.gen {
                return Err(Error::MalformedElement(
                    "adjacent syllables share a generator".into(),
                ));
            }
            let same_leaf = group.leaf_of_gen(a.gen) == group.leaf_of_gen(b.gen);
            if same_leaf && group.gen_is_sorted(a.gen) && a.gen > b.gen {
                return Err(Error::MalformedElement(
                    "abelian block out of generator order".into(),
                ));
            }
            if same_leaf && !group.gen_is_sorted(a.gen) && group.leaves()[group.leaf_of_gen(a.gen) as usize].abelian {
                // rank-1 abelian leaf: same gen would have merged above
            }
        }
        if let Some(s) = self.syllables.first() {
            if s.gen as usize >= group.n_gens() {
                return Err(Error::MalformedElement("generator out of range".into()));
            }
        }
        if self.syllables.iter().any(|s| s.exp == 0) {
            return Err(Error::MalformedElement("zero exponent".into()));
        }
        Ok(())
    }

    /// Append `syl` on the right, keeping the normal form. Returns the word
    /// length delta.
    fn push_syllable(group: &Group, stack: &mut Vec<Syllable>, syl: Syllable) -> i64 {
        debug_assert!(syl.exp != 0);
        if let Some(top) = stack.last_mut() {
            if top.gen == syl.gen {
                let before = top.exp.abs();
                top.exp += syl.exp;
                let after = top.exp.abs();
                if top.exp == 0 {
                    stack.pop();
                }
                return after - before;
            }
            if group.leaf_of_gen(top.gen) == group.leaf_of_gen(syl.gen)
                && group.gen_is_sorted(syl.gen)
            {
                // Sorted abelian block: walk back through the trailing run.
                let leaf = group.leaf_of_gen(syl.gen);
                let mut pos = stack.len();
                while pos > 0 {
                    let s = stack[pos - 1];
                    if group.leaf_of_gen(s.gen) != leaf || s.gen < syl.gen {
                        break;
                    }
                    if s.gen == syl.gen {
                        let before = stack[pos - 1].exp.abs();
                        stack[pos - 1].exp += syl.exp;
                        let after = stack[pos - 1].exp.abs();
                        if stack[pos - 1].exp == 0 {
                            stack.remove(pos - 1);
                        }
                        return after - before;
                    }
                    pos -= 1;
                }
                stack.insert(pos, syl);
                return syl.exp.abs();
            }
        }
        stack.push(syl);
        syl.exp.abs()
    }

    /// Right-multiply in place by a single directed generator. Returns the
    /// word length delta (always +1 or -1).
    pub fn apply_dirgen(&mut self, group: &Group, s: u32) -> i64 {
        Self::push_syllable(
            group,
            &mut self.syllables,
            Syllable {
                gen: dirgen_base(s),
                exp: dirgen_exp(s),
            },
        )
    }

    /// Right-multiply in place by `b`. Returns the word length delta.
    pub fn apply(&mut self, group: &Group, b: &GroupElement) -> i64 {
        let mut delta = 0;
        for &syl in &b.syllables {
            delta += Self::push_syllable(group, &mut self.syllables, syl);
        }
        delta
    }

    /// Canonical letter sequence: each syllable expanded to |exp| directed
    /// generators. Its length is the word length.
    pub fn letters(&self) -> impl Iterator<Item = u32> + '_ {
        self.syllables.iter().flat_map(|s| {
            let d = dirgen(s.gen, s.exp < 0);
            std::iter::repeat(d).take(s.exp.unsigned_abs() as usize)
        })
    }

    /// First `n` canonical letters as an element (geodesic prefix).
    pub fn prefix(&self, group: &Group, n: u64) -> GroupElement {
        let mut out = Vec::new();
        let mut remaining = n;
        for &s in &self.syllables {
            if remaining == 0 {
                break;
            }
            let take = s.exp.unsigned_abs().min(remaining);
            out.push(Syllable {
                gen: s.gen,
                exp: s.exp.signum() * take as i64,
            });
            remaining -= take;
        }
        let _ = group;
        GroupElement { syllables: out }
    }

    /// Total order on normal forms: lexicographic on syllables, where
    /// syllables compare by generator and then by exponent with positive
    /// exponents ascending before negative exponents ascending in absolute
    /// value (1 < 2 < ... < -1 < -2 < ...).
    pub fn cmp_normal(&self, other: &GroupElement) -> Ordering {
        let n = self.syllables.len().min(other.syllables.len());
        for i in 0..n {
            let ord = cmp_syllable(self.syllables[i], other.syllables[i]);
            if ord != Ordering::Equal {
                return ord;
            }
        }
        self.syllables.len().cmp(&other.syllables.len())
    }

    /// Render with the group's generator names, `e` for the identity.
    pub fn display(&self, group: &Group) -> String {
        if self.is_identity() {
            return "e".into();
        }
        let mut out = String::new();
        for (i, s) in self.syllables.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(group.gen_name(s.gen));
            if s.exp != 1 {
                let _ = write!(out, "^{}", s.exp);
            }
        }
        out
    }

    /// Parse the word grammar: `e`, `a^3 b^-1`, `x^2 c y^-4` (whitespace or
    /// `*` separated; `^exp` optional).
    pub fn parse(group: &Group, text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() || text == "e" || text == "1" {
            return Ok(GroupElement::identity());
        }
        let mut stack = Vec::new();
        for token in text.split([' ', '*', '\t']).filter(|t| !t.is_empty()) {
            let (name, exp) = match token.find('^') {
                Some(i) => {
                    let exp: i64 = token[i + 1..].parse().map_err(|_| {
                        Error::MalformedElement(format!("bad exponent in {token:?}"))
                    })?;
                    (&token[..i], exp)
                }
                None => (token, 1),
            };
            let gen = group
                .gen_by_name(name)
                .ok_or_else(|| Error::MalformedElement(format!("unknown generator {name:?}")))?;
            if exp != 0 {
                Self::push_syllable(group, &mut stack, Syllable { gen, exp });
            }
        }
        Ok(GroupElement { syllables: stack })
    }
}

pub(crate) fn cmp_syllable(a: Syllable, b: Syllable) -> Ordering {
    a.gen.cmp(&b.gen).then_with(|| exp_key(a.exp).cmp(&exp_key(b.exp)))
}

/// Order-preserving key for exponents: positives ascending, then negatives
/// ascending in absolute value.
fn exp_key(e: i64) -> u64 {
    if e > 0 {
        e as u64
    } else {
        (1u64 << 63) + (-e) as u64
    }
}

/// The group law on normal forms.
pub fn multiply(group: &Group, a: &GroupElement, b: &GroupElement) -> GroupElement {
    let mut out = a.clone();
    out.apply(group, b);
    out
}

pub fn inverse(group: &Group, a: &GroupElement) -> GroupElement {
    let mut stack = Vec::with_capacity(a.syllables().len());
    for &s in a.syllables().iter().rev() {
        GroupElement::push_syllable(
            group,
            &mut stack,
            Syllable {
                gen: s.gen,
                exp: -s.exp,
            },
        );
    }
    GroupElement { syllables: stack }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f2() -> Group {
        Group::parse("free(2)").unwrap()
    }

    fn z2() -> Group {
        Group::parse("abelian(2)").unwrap()
    }

    fn z2_free1() -> Group {
        Group::parse("product(abelian(2), free(1))").unwrap()
    }

    #[test]
    fn free_reduction() {
        let g = f2();
        let ab = GroupElement::parse(&g, "a b").unwrap();
        let binv_a = GroupElement::parse(&g, "b^-1 a").unwrap();
        let prod = multiply(&g, &ab, &binv_a);
        assert_eq!(prod.display(&g), "a^2");
        assert_eq!(prod.word_length(), 2);
    }

    #[test]
    fn abelian_addition() {
        let g = z2();
        let u = GroupElement::parse(&g, "x y^2").unwrap();
        let v = GroupElement::parse(&g, "x^3 y^-2").unwrap();
        let prod = multiply(&g, &u, &v);
        assert_eq!(prod.display(&g), "x^4");
        assert_eq!(GroupElement::parse(&g, "x^3 y^-4").unwrap().word_length(), 7);
    }

    #[test]
    fn product_seam_cancellation() {
        let g = z2_free1();
        let x = GroupElement::parse(&g, "x").unwrap();
        let c = GroupElement::parse(&g, "c").unwrap();
        let cinv = GroupElement::parse(&g, "c^-1").unwrap();
        let out = multiply(&g, &multiply(&g, &x, &c), &cinv);
        assert_eq!(out.display(&g), "x");
        let w = GroupElement::parse(&g, "x^2 c^3 y").unwrap();
        assert_eq!(w.word_length(), 6);
    }

    #[test]
    fn inverse_roundtrip() {
        let g = f2();
        let ab = GroupElement::parse(&g, "a b").unwrap();
        let inv = inverse(&g, &ab);
        assert_eq!(inv.display(&g), "b^-1 a^-1");
        assert!(multiply(&g, &ab, &inv).is_identity());
        assert!(inverse(&g, &GroupElement::identity()).is_identity());

        let z = Group::parse("free(1)").unwrap();
        let five = GroupElement::parse(&z, "a^5").unwrap();
        assert_eq!(inverse(&z, &five).display(&z), "a^-5");
    }

    #[test]
    fn inverse_resorts_abelian_blocks() {
        let g = z2();
        let u = GroupElement::parse(&g, "x y^2").unwrap();
        let inv = inverse(&g, &u);
        assert_eq!(inv.display(&g), "x^-1 y^-2");
        assert!(multiply(&g, &u, &inv).is_identity());
    }

    #[test]
    fn validate_rejects_malformed() {
        let g = f2();
        assert!(GroupElement::from_syllables(
            &g,
            vec![Syllable { gen: 0, exp: 1 }, Syllable { gen: 0, exp: 1 }]
        )
        .is_err());
        assert!(GroupElement::from_syllables(&g, vec![Syllable { gen: 0, exp: 0 }]).is_err());
        let z = z2();
        assert!(GroupElement::from_syllables(
            &z,
            vec![Syllable { gen: 1, exp: 1 }, Syllable { gen: 0, exp: 1 }]
        )
        .is_err());
    }

    #[test]
    fn letters_roundtrip() {
        let g = z2_free1();
        let w = GroupElement::parse(&g, "x^2 c^-1 y").unwrap();
        let mut rebuilt = GroupElement::identity();
        for letter in w.letters() {
            rebuilt.apply_dirgen(&g, letter);
        }
        assert_eq!(rebuilt, w);
        assert_eq!(w.letters().count() as u64, w.word_length());
    }

    #[test]
    fn prefix_takes_leading_letters() {
        let g = f2();
        let w = GroupElement::parse(&g, "a^3 b^-2").unwrap();
        assert_eq!(w.prefix(&g, 4).display(&g), "a^3 b^-1");
        assert_eq!(w.prefix(&g, 0), GroupElement::identity());
        assert_eq!(w.prefix(&g, 99), w);
    }

    #[test]
    fn normal_order_is_sign_major() {
        let g = f2();
        let mut words: Vec<GroupElement> = ["a", "a^-1", "b", "a^2", "a b^-1", "a b"]
            .iter()
            .map(|t| GroupElement::parse(&g, t).unwrap())
            .collect();
        words.sort_by(|u, v| u.cmp_normal(v));
        let shown: Vec<String> = words.iter().map(|w| w.display(&g)).collect();
        assert_eq!(shown, vec!["a", "a b", "a b^-1", "a^2", "a^-1", "b"]);
    }
}
