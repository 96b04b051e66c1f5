//! Brute-force evaluators for the width-expansion formulas, written over
//! plain nested vectors and raw index maps so they share no code with the
//! crate.

use growformer_core::SeededRng;

pub type Grid = Vec<Vec<f32>>;

/// How many entries of `map` point at `x`, counted by a full scan.
pub fn multiplicity(map: &[usize], x: usize) -> usize {
    map.iter().filter(|&&y| y == x).count()
}

/// In-dimension duplication: row `i` is source row `g_in[i]` divided by the
/// number of target rows sharing that source row.
pub fn expand_rows(w: &Grid, g_in: &[usize]) -> Grid {
    let mut out = Vec::new();
    for &src in g_in {
        let c = multiplicity(g_in, src) as f32;
        out.push(w[src].iter().map(|x| x / c).collect());
    }
    out
}

/// Out-dimension duplication without rescaling.
pub fn expand_cols(w: &Grid, g_out: &[usize]) -> Grid {
    let mut out = Vec::new();
    for row in w {
        let mut r = Vec::new();
        for &src in g_out {
            r.push(row[src]);
        }
        out.push(r);
    }
    out
}

pub fn brute_expn(w: &Grid, g_in: &[usize], g_out: &[usize]) -> Grid {
    expand_cols(&expand_rows(w, g_in), g_out)
}

/// Two-matrix expansion: the first `cols(current)` columns from the
/// in-expanded current matrix, the rest from the in-expanded upper matrix
/// picked by `upper_out`.
pub fn brute_expn_upper(current: &Grid, upper: &Grid, g_in: &[usize], upper_out: &[usize]) -> Grid {
    let cur = expand_rows(current, g_in);
    let up = expand_rows(upper, g_in);
    let d_out = current[0].len();
    let mut out = Vec::new();
    for i in 0..g_in.len() {
        let mut row = Vec::new();
        for (j, &src) in upper_out.iter().enumerate() {
            row.push(if j < d_out { cur[i][j] } else { up[i][src] });
        }
        out.push(row);
    }
    out
}

/// Identity prefix of length `src`, uniform tail.
pub fn random_map(src: usize, tgt: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut m: Vec<usize> = (0..src).collect();
    while m.len() < tgt {
        m.push(rng.sample_index(src).unwrap());
    }
    m
}

/// Head map lifted to coordinates: target head `h` covers coordinates
/// `h*dk..(h+1)*dk` of source head `map[h]`.
pub fn lift(map: &[usize], dk: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for &h in map {
        for k in 0..dk {
            out.push(h * dk + k);
        }
    }
    out
}

pub fn random_grid(rows: usize, cols: usize, rng: &mut SeededRng) -> Grid {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.uniform() * 4.0 - 2.0).collect())
        .collect()
}

pub fn grid_of(data: &[f32], rows: usize, cols: usize) -> Grid {
    assert_eq!(data.len(), rows * cols);
    data.chunks(cols).map(<[f32]>::to_vec).collect()
}

pub fn bitwise_eq(a: &Grid, b: &Grid) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
        })
}
