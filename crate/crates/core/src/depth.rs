//! Functional depth by iterated farthest-pair extraction.
//!
//! The sample columns are treated as curves in L2. The farthest pair of the
//! remaining curves forms the next border; removing it and repeating peels
//! the sample from the outside in. A curve's depth is the index of its
//! border divided by the sample size, so the last border holds the deepest
//! curve(s).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ExpressionMatrix;
use crate::normalize::{ReferenceCurve, ReferenceSource};

/// Symmetric matrix of Euclidean distances between sample columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    /// Build from a full row-major `n × n` table. The table must be
    /// symmetric with a zero diagonal and finite non-negative entries.
    pub fn from_full(n: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::Dimension(format!(
                "distance table has {} entries, expected {}",
                d.len(),
                n * n
            )));
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(Error::Domain(format!("non-zero diagonal at {i}")));
            }
            for j in 0..i {
                let v = d[i * n + j];
                if !v.is_finite() || v < 0.0 || v != d[j * n + i] {
                    return Err(Error::Domain(format!(
                        "entry ({i}, {j}) is not a symmetric non-negative distance"
                    )));
                }
            }
        }
        Ok(Self { n, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

/// Euclidean distance between two equal-length slices.
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// All pairwise column distances, computed in parallel over pairs.
pub fn pairwise_distances(m: &ExpressionMatrix) -> Result<DistanceMatrix> {
    let n = m.n_cols();
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in matrix".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let dists: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| l2_distance(m.column(i), m.column(j)))
        .collect();
    let mut d = vec![0.0; n * n];
    for (&(i, j), &v) in pairs.iter().zip(&dists) {
        d[i * n + j] = v;
        d[j * n + i] = v;
    }
    Ok(DistanceMatrix { n, d })
}

/// Members of one border: a farthest pair, or the final odd singleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Members {
    Pair(usize, usize),
    Single(usize),
}

impl Members {
    pub fn indices(&self) -> Vec<usize> {
        match *self {
            Members::Pair(a, b) => vec![a, b],
            Members::Single(a) => vec![a],
        }
    }

    pub fn contains(&self, j: usize) -> bool {
        match *self {
            Members::Pair(a, b) => a == j || b == j,
            Members::Single(a) => a == j,
        }
    }

    pub fn partner(&self, j: usize) -> Option<usize> {
        match *self {
            Members::Pair(a, b) if a == j => Some(b),
            Members::Pair(a, b) if b == j => Some(a),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Border {
    pub members: Members,
    /// Intra-pair distance; 0 for a singleton.
    pub distance: f64,
}

/// Borders in extraction order, from least deep to deepest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorderSequence {
    pub borders: Vec<Border>,
    pub n: usize,
}

impl BorderSequence {
    pub fn distances(&self) -> Vec<f64> {
        self.borders.iter().map(|b| b.distance).collect()
    }

    pub fn deepest(&self) -> &Border {
        self.borders.last().expect("border sequence is never empty")
    }

    /// Rewrite member indices through `map` (e.g. from a class subset back
    /// to matrix columns).
    pub fn remap(&self, map: &[usize]) -> BorderSequence {
        let borders = self
            .borders
            .iter()
            .map(|b| Border {
                members: match b.members {
                    Members::Pair(x, y) => Members::Pair(map[x], map[y]),
                    Members::Single(x) => Members::Single(map[x]),
                },
                distance: b.distance,
            })
            .collect();
        BorderSequence {
            borders,
            n: self.n,
        }
    }
}

/// Peel farthest pairs until at most one column remains.
///
/// Ties on distance go to the lexicographically smallest `(i, j)`, `i < j`.
/// All candidate pairs are ordered once by (distance desc, i, j); a pair is
/// taken as the next border when neither member has been removed yet, which
/// is exactly the argmax over the remaining columns.
pub fn extract_borders(dm: &DistanceMatrix) -> Result<BorderSequence> {
    let n = dm.len();
    if n < 2 {
        return Err(Error::Dimension(format!(
            "border extraction needs at least 2 columns, got {n}"
        )));
    }
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    pairs.sort_by(|&(a, b), &(c, d)| {
        dm.get(c, d)
            .total_cmp(&dm.get(a, b))
            .then_with(|| (a, b).cmp(&(c, d)))
    });

    let mut removed = vec![false; n];
    let mut remaining = n;
    let mut borders = Vec::with_capacity(n.div_ceil(2));
    for &(i, j) in &pairs {
        if remaining < 2 {
            break;
        }
        if removed[i] || removed[j] {
            continue;
        }
        removed[i] = true;
        removed[j] = true;
        remaining -= 2;
        borders.push(Border {
            members: Members::Pair(i, j),
            distance: dm.get(i, j),
        });
    }
    if remaining == 1 {
        let last = removed.iter().position(|r| !r).expect("one column left");
        borders.push(Border {
            members: Members::Single(last),
            distance: 0.0,
        });
    }
    Ok(BorderSequence { borders, n })
}

/// Depth of every column: its 1-based border index over `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthResult {
    pub border_index: Vec<usize>,
    pub n: usize,
    pub deepest: Vec<usize>,
}

impl DepthResult {
    /// `border_index[j] / n`.
    pub fn depth(&self, j: usize) -> f64 {
        self.border_index[j] as f64 / self.n as f64
    }

    pub fn depth_values(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.depth(j)).collect()
    }
}

pub fn depth_values(bs: &BorderSequence) -> DepthResult {
    let mut border_index = vec![0; bs.n];
    for (k, b) in bs.borders.iter().enumerate() {
        for j in b.members.indices() {
            border_index[j] = k + 1;
        }
    }
    DepthResult {
        border_index,
        n: bs.n,
        deepest: bs.deepest().members.indices(),
    }
}

/// Borders and depth of a matrix in one call.
pub fn depth_of(m: &ExpressionMatrix) -> Result<(BorderSequence, DepthResult)> {
    let dm = pairwise_distances(m)?;
    let bs = extract_borders(&dm)?;
    let depth = depth_values(&bs);
    Ok((bs, depth))
}

/// Component-wise mean of the given columns.
pub(crate) fn average_columns(m: &ExpressionMatrix, cols: &[usize]) -> Vec<f64> {
    let mut out = m.column(cols[0]).to_vec();
    for &j in &cols[1..] {
        for (o, v) in out.iter_mut().zip(m.column(j)) {
            *o += v;
        }
    }
    let k = cols.len() as f64;
    out.iter_mut().for_each(|o| *o /= k);
    out
}

/// Deepest sorted column as a normalization reference, with its depth
/// result. A two-member final border yields the average of the pair.
pub fn deepest_reference(m: &ExpressionMatrix) -> Result<(ReferenceCurve, BorderSequence, DepthResult)> {
    if !m.is_sorted() {
        return Err(Error::NotSorted);
    }
    let (bs, depth) = depth_of(m)?;
    let reference = match bs.deepest().members {
        Members::Single(j) => ReferenceCurve::new(m.column(j).to_vec(), ReferenceSource::Deepest),
        Members::Pair(a, b) => {
            ReferenceCurve::new(average_columns(m, &[a, b]), ReferenceSource::DeepestPairAverage)
        }
    };
    Ok((reference, bs, depth))
}

pub fn deepest_curve(m: &ExpressionMatrix) -> Result<ReferenceCurve> {
    deepest_reference(m).map(|(r, _, _)| r)
}

/// CSV export: `sample_id,border_index,depth,intra_pair_distance,pair_partner_id`.
pub fn write_depth_csv<W: Write>(
    writer: W,
    sample_ids: &[String],
    bs: &BorderSequence,
    depth: &DepthResult,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "sample_id",
        "border_index",
        "depth",
        "intra_pair_distance",
        "pair_partner_id",
    ])?;
    for (j, id) in sample_ids.iter().enumerate() {
        let k = depth.border_index[j];
        let border = &bs.borders[k - 1];
        let partner = border
            .members
            .partner(j)
            .map(|p| sample_ids[p].clone())
            .unwrap_or_default();
        wtr.write_record([
            id.clone(),
            k.to_string(),
            format!("{}", depth.depth(j)),
            format!("{}", border.distance),
            partner,
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<depth writer>", e))?;
    Ok(())
}
