use std::collections::{BTreeMap, BTreeSet};

use ccspace::freelift::{expand, AssocPoly, HallBasis};
use ccspace::polyalg::{linalg, rint, Rational};

pub fn commutator(a: &AssocPoly, b: &AssocPoly) -> AssocPoly {
    let mut out = AssocPoly::new();
    for (u, x) in a {
        for (v, y) in b {
            let c = x * y;
            for (w, sign) in [([u.as_slice(), v.as_slice()].concat(), 1), ([v.as_slice(), u.as_slice()].concat(), -1)] {
                let e = out.entry(w).or_insert_with(|| rint(0));
                *e += &c * rint(sign);
            }
        }
    }
    out.retain(|_, c| *c != rint(0));
    out
}

/// Dimensions `n_1..n_M` of the free nilpotent algebra from brackets of
/// generators expanded in the tensor algebra, graded by weight.
pub fn bracket_oracle(weights: &[u32], m: u32) -> Vec<usize> {
    let mut levels: BTreeMap<u32, Vec<AssocPoly>> = BTreeMap::new();
    for (i, &w) in weights.iter().enumerate() {
        levels.entry(w).or_default().push(AssocPoly::from([(vec![i], rint(1))]));
    }
    for h in 1..=m {
        let mut cands = levels.remove(&h).unwrap_or_default();
        for a_deg in 1..h {
            let (Some(a), Some(b)) = (levels.get(&a_deg), levels.get(&(h - a_deg))) else {
                continue;
            };
            for x in a {
                for y in b {
                    cands.push(commutator(x, y));
                }
            }
        }
        let mut basis: Vec<AssocPoly> = Vec::new();
        for c in cands {
            let mut trial = basis.clone();
            trial.push(c.clone());
            if rank(&trial) > basis.len() {
                basis.push(c);
            }
        }
        levels.insert(h, basis);
    }
    let mut total = 0;
    (1..=m)
        .map(|h| {
            total += levels.get(&h).map_or(0, Vec::len);
            total
        })
        .collect()
}

fn rank(polys: &[AssocPoly]) -> usize {
    let keys: Vec<&Vec<usize>> = polys.iter().flat_map(|p| p.keys()).collect::<BTreeSet<_>>().into_iter().collect();
    let rows: Vec<Vec<Rational>> = polys
        .iter()
        .map(|p| keys.iter().map(|k| p.get(*k).cloned().unwrap_or_else(|| rint(0))).collect())
        .collect();
    linalg::rank(&rows)
}

/// Whether `[h_i, h_j] = Σ_k c_ijk h_k` holds in the tensor algebra for every
/// pair, with products above the depth dropped.
pub fn constants_match_expansion(basis: &HallBasis, m: u32) -> Result<(), String> {
    let exp: Vec<AssocPoly> = basis.elements.iter().map(|e| expand(&e.tree)).collect();
    for i in 0..basis.dim() {
        for j in 0..basis.dim() {
            let (hi, hj) = (&basis.elements[i], &basis.elements[j]);
            let mut want = commutator(&exp[i], &exp[j]);
            if hi.hdeg + hj.hdeg > m {
                want.clear();
            }
            let mut got = AssocPoly::new();
            for (a, b, k, c) in &basis.constants {
                if (*a, *b) == (i, j) {
                    for (word, x) in &exp[*k] {
                        *got.entry(word.clone()).or_insert_with(|| rint(0)) += c * x;
                    }
                }
            }
            got.retain(|_, c| *c != rint(0));
            if got != want {
                return Err(format!("[{}, {}]", hi.tree.label(), hj.tree.label()));
            }
        }
    }
    Ok(())
}
