use crate::error::{Error, Result};
use crate::group::{dirgen_base, dirgen_exp, dirgen_inv, Group, GroupElement};

/// Adjacency sentinel for steps leaving the ball.
pub const OUTSIDE: u32 = u32::MAX;

/// Default cap on adjacency entries (elements x directed generators).
pub const DEFAULT_ADJACENCY_CAP: u64 = 100_000_000;

/// The ball of radius `R` around the identity in the Cayley graph, BFS
/// enumerated sphere by sphere. Within a sphere, elements are sorted by the
/// normal-form order of [`GroupElement::cmp_normal`]; index 0 is the
/// identity. Layouts are reproducible across runs.
///
/// Normal forms are not stored; they are decoded on demand from the
/// adjacency structure, which keeps the memory footprint at one `u32` per
/// (element, directed generator) pair.
pub struct CayleyBall {
    group: Group,
    radius: u32,
    n_dirgens: u32,
    sphere_offsets: Vec<u32>,
    adjacency: Vec<u32>,
}

/// Construction-time encoding of normal forms: fixed-width syllables of
/// `1 + exp_bytes` bytes, zero-padded to the sphere stride. Byte order
/// matches the sign-major syllable order, so `memcmp` sorts correctly.
struct Codec {
    exp_bytes: usize,
}

impl Codec {
    fn new(radius: u32) -> Self {
        Codec {
            exp_bytes: if radius <= 127 { 1 } else { 2 },
        }
    }

    fn syl_bytes(&self) -> usize {
        1 + self.exp_bytes
    }

    fn encode_exp(&self, e: i64, out: &mut [u8]) {
        debug_assert!(e != 0);
        if self.exp_bytes == 1 {
            let key = if e > 0 { e as u8 } else { 128 + (-e) as u8 };
            out[0] = key;
        } else {
            let key: u16 = if e > 0 {
                e as u16
            } else {
                0x8000 + (-e) as u16
            };
            out.copy_from_slice(&key.to_be_bytes());
        }
    }

    fn decode_exp(&self, bytes: &[u8]) -> i64 {
        if self.exp_bytes == 1 {
            let k = bytes[0];
            if k < 128 {
                k as i64
            } else {
                -((k - 128) as i64)
            }
        } else {
            let k = u16::from_be_bytes([bytes[0], bytes[1]]);
            if k < 0x8000 {
                k as i64
            } else {
                -((k - 0x8000) as i64)
            }
        }
    }

    /// Number of used bytes in a zero-padded word.
    fn used_len(&self, word: &[u8]) -> usize {
        let sb = self.syl_bytes();
        let mut p = 0;
        while p < word.len() && word[p] != 0 {
            p += sb;
        }
        p
    }

    /// Right-multiply the encoded `word` by directed generator `s`, writing
    /// the padded result into `out`. Returns the word-length delta (+1/-1).
    fn apply_letter(&self, group: &Group, word: &[u8], s: u32, out: &mut [u8]) -> i64 {
        let sb = self.syl_bytes();
        let used = self.used_len(word);
        let gen = dirgen_base(s);
        let exp = dirgen_exp(s);
        out.fill(0);

        // Locate the insertion point: by default append at the end.
        let mut merge_at: Option<usize> = None;
        let mut insert_at = used;
        if used > 0 {
            let last_gen = (word[used - sb] - 1) as u32;
            if last_gen == gen {
                merge_at = Some(used - sb);
            } else if group.leaf_of_gen(last_gen) == group.leaf_of_gen(gen)
                && group.gen_is_sorted(gen)
            {
                let leaf = group.leaf_of_gen(gen);
                let mut p = used;
                while p > 0 {
                    let g_here = (word[p - sb] - 1) as u32;
                    if group.leaf_of_gen(g_here) != leaf || g_here < gen {
                        break;
                    }
                    if g_here == gen {
                        merge_at = Some(p - sb);
                        break;
                    }
                    p -= sb;
                }
                if merge_at.is_none() {
                    insert_at = p;
                }
            }
        }

        if let Some(p) = merge_at {
            let old = self.decode_exp(&word[p + 1..p + sb]);
            let new = old + exp;
            if new == 0 {
                out[..p].copy_from_slice(&word[..p]);
                out[p..used - sb].copy_from_slice(&word[p + sb..used]);
                -1
            } else {
                out[..used].copy_from_slice(&word[..used]);
                self.encode_exp(new, &mut out[p + 1..p + sb]);
                new.abs() - old.abs()
            }
        } else {
            out[..insert_at].copy_from_slice(&word[..insert_at]);
            out[insert_at] = gen as u8 + 1;
            self.encode_exp(exp, &mut out[insert_at + 1..insert_at + sb]);
            out[insert_at + sb..used + sb].copy_from_slice(&word[insert_at..used]);
            1
        }
    }

}

impl CayleyBall {
    pub fn build(group: Group, radius: u32) -> Result<Self> {
        Self::build_with_cap(group, radius, DEFAULT_ADJACENCY_CAP)
    }

    pub fn build_with_cap(group: Group, radius: u32, cap_entries: u64) -> Result<Self> {
        if radius > 32_000 {
            return Err(Error::Config("ball radius over 32000".into()));
        }
        let gdir = group.n_dirgens();
        let codec = Codec::new(radius);
        let sb = codec.syl_bytes();
        // Streaming dedup relies on per-parent sorted candidates staying
        // globally sorted, which holds when no block of the normal form
        // reorders internally. Abelian leaves of rank >= 2 reorder.
        let merge_safe = group
            .leaves()
            .iter()
            .all(|l| !l.abelian || l.rank == 1);

        let mut adjacency = vec![OUTSIDE; gdir];
        let mut offsets: Vec<u32> = vec![0, 1];
        let mut prev_arena: Vec<u8> = Vec::new(); // sphere r, stride sb*r
        let mut prev_count = 1usize;
        let mut total = 1usize;

        let mut cand_bufs: Vec<Vec<u8>> = (0..gdir).map(|_| Vec::new()).collect();
        let mut cand_letters: Vec<u32> = Vec::new();

        for r in 0..radius {
            let stride_in = sb * r as usize;
            let stride_out = sb * (r + 1) as usize;
            let max_new = if r == 0 {
                gdir
            } else {
                prev_count * (gdir - 1)
            };
            let projected = (total + max_new) as u64 * gdir as u64;
            if projected > cap_entries {
                return Err(Error::CapacityExceeded {
                    entries: projected,
                    cap: cap_entries,
                });
            }
            adjacency.reserve(max_new * gdir);

            for buf in &mut cand_bufs {
                buf.resize(stride_out, 0);
            }

            let base = total as u32;
            let sphere_start = offsets[r as usize] as usize;

            let mut next_arena: Vec<u8> = Vec::new();
            let mut new_count = 0usize;
            let mut violation = false;

            {
                // Streaming pass: emit candidates in per-parent sorted order
                // and dedup against the previous one.
                let mut prev_word: Vec<u8> = Vec::new();
                'parents: for pi in 0..prev_count {
                    let parent_word = &prev_arena[pi * stride_in..(pi + 1) * stride_in];
                    let parent_idx = sphere_start as u32 + pi as u32;
                    cand_letters.clear();
                    for s in 0..gdir as u32 {
                        let delta = codec.apply_letter(
                            &group,
                            parent_word,
                            s,
                            &mut cand_bufs[s as usize],
                        );
                        if delta > 0 {
                            cand_letters.push(s);
                        }
                    }
                    cand_letters
                        .sort_by(|&a, &b| cand_bufs[a as usize].cmp(&cand_bufs[b as usize]));
                    for &s in &cand_letters {
                        let word = &cand_bufs[s as usize];
                        let child = if prev_word.is_empty() && new_count == 0 {
                            prev_word = word.clone();
                            next_arena.extend_from_slice(word);
                            adjacency.resize(adjacency.len() + gdir, OUTSIDE);
                            new_count = 1;
                            base
                        } else {
                            match word.as_slice().cmp(prev_word.as_slice()) {
                                std::cmp::Ordering::Equal => base + new_count as u32 - 1,
                                std::cmp::Ordering::Greater => {
                                    prev_word.clear();
                                    prev_word.extend_from_slice(word);
                                    next_arena.extend_from_slice(word);
                                    adjacency.resize(adjacency.len() + gdir, OUTSIDE);
                                    new_count += 1;
                                    base + new_count as u32 - 1
                                }
                                std::cmp::Ordering::Less => {
                                    debug_assert!(!merge_safe, "sorted-stream order violated");
                                    violation = true;
                                    break 'parents;
                                }
                            }
                        };
                        adjacency[parent_idx as usize * gdir + s as usize] = child;
                        adjacency[child as usize * gdir + dirgen_inv(s) as usize] = parent_idx;
                    }
                }
            }

            if violation {
                // Rebuild this sphere by materializing and sorting all
                // candidates (abelian blocks reorder, so the stream is not
                // globally sorted). Stale up-edges written by the partial
                // streaming pass are all overwritten below; the parent
                // sphere's down-edges are untouched.
                adjacency.truncate(total * gdir);
                let mut words: Vec<u8> = Vec::new();
                let mut parents: Vec<(u32, u32)> = Vec::new();
                for pi in 0..prev_count {
                    let parent_word = &prev_arena[pi * stride_in..(pi + 1) * stride_in];
                    let parent_idx = sphere_start as u32 + pi as u32;
                    for s in 0..gdir as u32 {
                        let delta = codec.apply_letter(
                            &group,
                            parent_word,
                            s,
                            &mut cand_bufs[s as usize],
                        );
                        if delta > 0 {
                            words.extend_from_slice(&cand_bufs[s as usize]);
                            parents.push((parent_idx, s));
                        }
                    }
                }
                let n_cand = parents.len();
                let mut order: Vec<u32> = (0..n_cand as u32).collect();
                order.sort_unstable_by(|&a, &b| {
                    words[a as usize * stride_out..(a as usize + 1) * stride_out]
                        .cmp(&words[b as usize * stride_out..(b as usize + 1) * stride_out])
                });
                next_arena.clear();
                new_count = 0;
                let mut prev_slice: Option<&[u8]> = None;
                for &ci in &order {
                    let word = &words[ci as usize * stride_out..(ci as usize + 1) * stride_out];
                    let is_new = prev_slice != Some(word);
                    if is_new {
                        next_arena.extend_from_slice(word);
                        adjacency.resize(adjacency.len() + gdir, OUTSIDE);
                        new_count += 1;
                        prev_slice = Some(word);
                    }
                    let child = base + new_count as u32 - 1;
                    let (parent_idx, s) = parents[ci as usize];
                    adjacency[parent_idx as usize * gdir + s as usize] = child;
                    adjacency[child as usize * gdir + dirgen_inv(s) as usize] = parent_idx;
                }
            }

            total += new_count;
            offsets.push(total as u32);
            prev_arena = next_arena;
            prev_count = new_count;
            if new_count == 0 {
                // Finite ball exhausted (cannot happen for infinite groups).
                break;
            }
        }

        while offsets.len() < radius as usize + 2 {
            let last = *offsets.last().unwrap();
            offsets.push(last);
        }

        Ok(CayleyBall {
            group,
            radius,
            n_dirgens: gdir as u32,
            sphere_offsets: offsets,
            adjacency,
        })
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn len(&self) -> usize {
        *self.sphere_offsets.last().unwrap() as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_dirgens(&self) -> u32 {
        self.n_dirgens
    }

    pub fn sphere_range(&self, r: u32) -> std::ops::Range<u32> {
        let r = r as usize;
        self.sphere_offsets[r]..self.sphere_offsets[r + 1]
    }

    pub fn sphere_offsets(&self) -> &[u32] {
        &self.sphere_offsets
    }

    /// BFS distance from the identity (equals the word length).
    pub fn dist(&self, i: u32) -> u32 {
        debug_assert!((i as usize) < self.len());
        (self.sphere_offsets.partition_point(|&o| o <= i) - 1) as u32
    }

    pub fn neighbor(&self, i: u32, s: u32) -> u32 {
        self.adjacency[i as usize * self.n_dirgens as usize + s as usize]
    }

    pub fn adjacency_row(&self, i: u32) -> &[u32] {
        let g = self.n_dirgens as usize;
        &self.adjacency[i as usize * g..(i as usize + 1) * g]
    }

    pub fn adjacency(&self) -> &[u32] {
        &self.adjacency
    }

    /// Decode the normal form of element `i` by walking the BFS parents.
    pub fn element(&self, i: u32) -> GroupElement {
        let mut letters_rev = Vec::with_capacity(self.dist(i) as usize);
        let mut cur = i;
        while cur != 0 {
            let r = self.dist(cur);
            let below = self.sphere_offsets[r as usize];
            let row = self.adjacency_row(cur);
            let (s, parent) = row
                .iter()
                .enumerate()
                .find_map(|(s, &t)| (t != OUTSIDE && t < below).then_some((s as u32, t)))
                .expect("every non-identity element has a parent");
            letters_rev.push(dirgen_inv(s));
            cur = parent;
        }
        let mut out = GroupElement::identity();
        for &letter in letters_rev.iter().rev() {
            out.apply_dirgen(&self.group, letter);
        }
        out
    }

    /// Ball index of a normal form, if it lies within the radius.
    pub fn index_of(&self, g: &GroupElement) -> Option<u32> {
        if g.word_length() > self.radius as u64 {
            return None;
        }
        let mut cur = 0u32;
        for letter in g.letters() {
            cur = self.neighbor(cur, letter);
            if cur == OUTSIDE {
                return None;
            }
        }
        Some(cur)
    }

    /// Exact word distance between two ball elements.
    pub fn dist_between(&self, i: u32, j: u32) -> u32 {
        if i == j {
            return 0;
        }
        if i == 0 {
            return self.dist(j);
        }
        if j == 0 {
            return self.dist(i);
        }
        let gi = self.element(i);
        let gj = self.element(j);
        let mut w = crate::group::element::inverse(&self.group, &gi);
        w.apply(&self.group, &gj);
        w.word_length() as u32
    }

    /// Exact word distances from `v` to every ball element. These are
    /// distances in the group, not in the ball subgraph.
    pub fn dist_from(&self, v: u32) -> Vec<u32> {
        let n = self.len();
        if v == 0 {
            let mut out = vec![0u32; n];
            for r in 0..=self.radius {
                let range = self.sphere_range(r);
                for slot in &mut out[range.start as usize..range.end as usize] {
                    *slot = r;
                }
            }
            return out;
        }
        let v_inv = crate::group::element::inverse(&self.group, &self.element(v));
        (0..n as u32)
            .map(|i| {
                let mut w = v_inv.clone();
                w.apply(&self.group, &self.element(i));
                w.word_length() as u32
            })
            .collect()
    }

    /// In-ball BFS distances from `start` (may exceed the true group
    /// distance near the boundary, where geodesics leave the ball).
    pub fn bfs_in_ball(&self, start: u32) -> Vec<u32> {
        let n = self.len();
        let g = self.n_dirgens as usize;
        let mut dist = vec![u32::MAX; n];
        let mut queue = std::collections::VecDeque::new();
        dist[start as usize] = 0;
        queue.push_back(start);
        while let Some(cur) = queue.pop_front() {
            let d = dist[cur as usize];
            for s in 0..g {
                let t = self.adjacency[cur as usize * g + s];
                if t != OUTSIDE && dist[t as usize] == u32::MAX {
                    dist[t as usize] = d + 1;
                    queue.push_back(t);
                }
            }
        }
        dist
    }

    /// Deterministic geodesic from `x` to `y`: a path of length `d(x,y)`
    /// choosing the lowest-index next vertex at every step. Requires
    /// `|x| + d(x,y) <= R`, which keeps every geodesic inside the ball.
    pub fn geodesic(&self, x: u32, y: u32) -> Result<Vec<u32>> {
        let d = self.dist_between(x, y);
        if self.dist(x) + d > self.radius {
            return Err(Error::OutOfBall(format!(
                "|x|={} plus d(x,y)={} exceeds radius {}",
                self.dist(x),
                d,
                self.radius
            )));
        }
        let dx = self.bfs_in_ball(x);
        let dy = self.bfs_in_ball(y);
        debug_assert_eq!(dx[y as usize], d);
        let mut path = Vec::with_capacity(d as usize + 1);
        let mut cur = x;
        path.push(cur);
        for _ in 0..d {
            let next = self
                .adjacency_row(cur)
                .iter()
                .filter(|&&t| {
                    t != OUTSIDE
                        && dx[t as usize] == dx[cur as usize] + 1
                        && dy[t as usize] == dy[cur as usize].wrapping_sub(1)
                })
                .min()
                .copied()
                .expect("geodesic step exists");
            path.push(next);
            cur = next;
        }
        Ok(path)
    }

    /// Word-metric Gromov product (d(v,x) + d(v,y) - d(x,y)) / 2.
    pub fn gromov_product_word(&self, v: u32, x: u32, y: u32) -> f64 {
        let a = self.dist_between(v, x) as f64;
        let b = self.dist_between(v, y) as f64;
        let c = self.dist_between(x, y) as f64;
        (a + b - c) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball(spec: &str, r: u32) -> CayleyBall {
        CayleyBall::build(Group::parse(spec).unwrap(), r).unwrap()
    }

    #[test]
    fn f2_ball_sizes_match_closed_form() {
        let b = ball("free(2)", 5);
        // |S_r| = 4 * 3^(r-1)
        for r in 1..=5u32 {
            let range = b.sphere_range(r);
            assert_eq!(range.end - range.start, 4 * 3u32.pow(r - 1));
        }
        assert_eq!(b.len(), 1 + 2 * (3usize.pow(5) - 1));
    }

    #[test]
    fn f2_r2_has_17_elements() {
        assert_eq!(ball("free(2)", 2).len(), 17);
    }

    #[test]
    fn z2_sphere_sizes() {
        let b = ball("abelian(2)", 6);
        assert_eq!(b.sphere_range(0).len(), 1);
        for r in 1..=6u32 {
            assert_eq!(b.sphere_range(r).len() as u32, 4 * r);
        }
        assert_eq!(ball("abelian(2)", 1).len(), 5);
    }

    #[test]
    fn z1_sphere_sizes() {
        let b = ball("free(1)", 10);
        for r in 1..=10u32 {
            assert_eq!(b.sphere_range(r).len(), 2);
        }
    }

    #[test]
    fn radius_zero_is_identity_only() {
        for spec in ["free(2)", "abelian(2)", "product(abelian(2), free(1))"] {
            assert_eq!(ball(spec, 0).len(), 1);
        }
    }

    #[test]
    fn adjacency_is_involutive() {
        for spec in ["free(2)", "abelian(2)", "product(abelian(2), free(1))"] {
            let b = ball(spec, 4);
            for i in 0..b.len() as u32 {
                for s in 0..b.n_dirgens() {
                    let t = b.neighbor(i, s);
                    if t != OUTSIDE {
                        assert_eq!(b.neighbor(t, dirgen_inv(s)), i, "{spec} i={i} s={s}");
                    }
                }
            }
        }
    }

    #[test]
    fn elements_unique_and_within_radius() {
        for spec in ["free(2)", "abelian(2)", "product(abelian(2), free(1))"] {
            let b = ball(spec, 4);
            let mut seen = std::collections::HashSet::new();
            for i in 0..b.len() as u32 {
                let g = b.element(i);
                assert_eq!(g.word_length() as u32, b.dist(i));
                assert!(g.validate(b.group()).is_ok());
                assert!(seen.insert(g), "duplicate element in {spec}");
            }
        }
    }

    #[test]
    fn spheres_are_sorted_by_normal_form_order() {
        for spec in ["free(2)", "abelian(2)", "product(abelian(2), free(1))"] {
            let b = ball(spec, 4);
            for r in 1..=4 {
                let range = b.sphere_range(r);
                let words: Vec<GroupElement> =
                    range.clone().map(|i| b.element(i)).collect();
                for pair in words.windows(2) {
                    assert_eq!(
                        pair[0].cmp_normal(&pair[1]),
                        std::cmp::Ordering::Less,
                        "sphere {r} of {spec} out of order"
                    );
                }
            }
        }
    }

    #[test]
    fn index_of_inverts_element() {
        let b = ball("product(abelian(2), free(1))", 4);
        for i in 0..b.len() as u32 {
            assert_eq!(b.index_of(&b.element(i)), Some(i));
        }
        let g = b.group().clone();
        let far = GroupElement::parse(&g, "c^5").unwrap();
        assert_eq!(b.index_of(&far), None);
    }

    #[test]
    fn capacity_error_reports_counts() {
        let err = CayleyBall::build_with_cap(Group::parse("free(2)").unwrap(), 10, 1000);
        match err {
            Err(Error::CapacityExceeded { entries, cap }) => {
                assert!(entries > cap);
                assert_eq!(cap, 1000);
            }
            Err(other) => panic!("expected capacity error, got {other:?}"),
            Ok(_) => panic!("expected capacity error, got a ball"),
        }
    }

    #[test]
    fn geodesic_z2_prefers_low_index() {
        let b = ball("abelian(2)", 3);
        let g = b.group().clone();
        let target = b
            .index_of(&GroupElement::parse(&g, "x y").unwrap())
            .unwrap();
        let path = b.geodesic(0, target).unwrap();
        let shown: Vec<String> = path.iter().map(|&i| b.element(i).display(&g)).collect();
        assert_eq!(shown, vec!["e", "x", "x y"]);
    }

    #[test]
    fn geodesic_f2_through_identity() {
        let b = ball("free(2)", 3);
        let g = b.group().clone();
        let a = b.index_of(&GroupElement::parse(&g, "a").unwrap()).unwrap();
        let a_inv = b
            .index_of(&GroupElement::parse(&g, "a^-1").unwrap())
            .unwrap();
        let path = b.geodesic(a_inv, a).unwrap();
        assert_eq!(path, vec![a_inv, 0, a]);

        let ab = b.index_of(&GroupElement::parse(&g, "a b").unwrap()).unwrap();
        let path = b.geodesic(0, ab).unwrap();
        assert_eq!(path.len(), 3);
        assert_eq!(path[0], 0);
        assert_eq!(path[2], ab);
    }

    #[test]
    fn geodesic_precondition_enforced() {
        let b = ball("free(2)", 3);
        let g = b.group().clone();
        let deep = b
            .index_of(&GroupElement::parse(&g, "a^3").unwrap())
            .unwrap();
        let other = b
            .index_of(&GroupElement::parse(&g, "b^3").unwrap())
            .unwrap();
        assert!(b.geodesic(deep, other).is_err());
    }

    #[test]
    fn gromov_product_examples() {
        let b = ball("free(2)", 4);
        let g = b.group().clone();
        let a2 = b.index_of(&GroupElement::parse(&g, "a^2").unwrap()).unwrap();
        let ab = b.index_of(&GroupElement::parse(&g, "a b").unwrap()).unwrap();
        // d(a^2, ab) = |a^-1 b| = 2, so (2 + 2 - 2) / 2 = 1.
        assert_eq!(b.gromov_product_word(0, a2, ab), 1.0);
        assert_eq!(b.gromov_product_word(a2, a2, ab), 0.0);
        assert_eq!(b.gromov_product_word(0, ab, ab), 2.0);
    }

    #[test]
    fn dist_from_matches_algebra() {
        let b = ball("product(abelian(2), free(1))", 3);
        let g = b.group().clone();
        let v = b.index_of(&GroupElement::parse(&g, "x c").unwrap()).unwrap();
        let dists = b.dist_from(v);
        for i in 0..b.len() as u32 {
            assert_eq!(dists[i as usize], b.dist_between(v, i));
        }
        let from_e = b.dist_from(0);
        for i in 0..b.len() as u32 {
            assert_eq!(from_e[i as usize], b.dist(i));
        }
    }
}
