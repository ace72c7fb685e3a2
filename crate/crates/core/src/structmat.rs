//! Structured sparse matrices: banded, block tridiagonal, ABD, BABD and
//! circulant-like, with an optional corner block.
//!
//! Storage is band-major for the scalar kinds (diagonals from `-s` to `+r`,
//! each diagonal stored top to bottom with its exact length `n - |d|`) and
//! block-row-major for the block kinds (for every block row, the stored
//! `m × m` blocks from left to right, each row-major). The corner block, when
//! present, is stored separately in row-major order.
//!
//! ABD and BABD matrices are block lower bidiagonal (`s = 1`, `r = 0` in
//! block units): block row `k` holds the blocks in block columns `k - 1` and
//! `k`. A BABD matrix additionally couples the first block row with the last
//! block column through an upper-right corner block.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::hexfloat::{format_hex, parse_hex};

/// Default order limit for dense materialization.
pub const DEFAULT_DENSE_LIMIT: usize = 2048;

/// Name of the generator recorded by the CLI next to generated files.
pub const GENERATOR_NAME: &str = "chacha8";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatrixKind {
    Banded,
    BlockTridiagonal,
    Abd,
    Babd,
    CirculantLike,
}

impl MatrixKind {
    pub const ALL: [MatrixKind; 5] = [
        MatrixKind::Banded,
        MatrixKind::BlockTridiagonal,
        MatrixKind::Abd,
        MatrixKind::Babd,
        MatrixKind::CirculantLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MatrixKind::Banded => "banded",
            MatrixKind::BlockTridiagonal => "blocktridiagonal",
            MatrixKind::Abd => "abd",
            MatrixKind::Babd => "babd",
            MatrixKind::CirculantLike => "circulant",
        }
    }

    pub fn from_name(s: &str) -> Option<MatrixKind> {
        match s.to_ascii_lowercase().as_str() {
            "banded" => Some(MatrixKind::Banded),
            "blocktridiagonal" | "block-tridiagonal" | "blocktri" => Some(MatrixKind::BlockTridiagonal),
            "abd" => Some(MatrixKind::Abd),
            "babd" => Some(MatrixKind::Babd),
            "circulant" | "circulantlike" | "circulant-like" => Some(MatrixKind::CirculantLike),
            _ => None,
        }
    }

    pub fn is_block(self) -> bool {
        matches!(self, MatrixKind::BlockTridiagonal | MatrixKind::Abd | MatrixKind::Babd)
    }

    pub fn has_corner(self) -> bool {
        matches!(self, MatrixKind::Babd | MatrixKind::CirculantLike)
    }
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CornerPosition {
    UpperRight,
    LowerLeft,
}

/// The smallest rectangle holding all corner entries: rows `0..rows` and
/// columns `n-cols..n` (upper right), or rows `n-rows..n` and columns
/// `0..cols` (lower left).
#[derive(Debug, Clone, PartialEq)]
pub struct Corner {
    pub position: CornerPosition,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Corner {
    pub fn upper_right(block: DenseMatrix) -> Self {
        Corner {
            position: CornerPosition::UpperRight,
            rows: block.rows(),
            cols: block.cols(),
            data: block.into_vec(),
        }
    }

    pub fn lower_left(block: DenseMatrix) -> Self {
        Corner {
            position: CornerPosition::LowerLeft,
            rows: block.rows(),
            cols: block.cols(),
            data: block.into_vec(),
        }
    }

    fn row_range(&self, n: usize) -> std::ops::Range<usize> {
        match self.position {
            CornerPosition::UpperRight => 0..self.rows,
            CornerPosition::LowerLeft => n - self.rows..n,
        }
    }

    fn col_range(&self, n: usize) -> std::ops::Range<usize> {
        match self.position {
            CornerPosition::UpperRight => n - self.cols..n,
            CornerPosition::LowerLeft => 0..self.cols,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMatrix {
    kind: MatrixKind,
    n: usize,
    m: usize,
    s: usize,
    r: usize,
    data: Vec<f64>,
    corner: Option<Corner>,
    // diagonal offsets (scalar kinds) or block-row offsets (block kinds)
    offsets: Vec<usize>,
}

impl StructuredMatrix {
    /// Validating constructor.
    pub fn make(
        kind: MatrixKind,
        n: usize,
        m: usize,
        s: usize,
        r: usize,
        data: Vec<f64>,
        corner: Option<Corner>,
    ) -> Result<Self> {
        let offsets = layout(kind, n, m, s, r)?;
        let expected = *offsets.last().unwrap();
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} kind with n={n}, m={m}, s={s}, r={r} stores {expected} entries, got {}",
                kind,
                data.len()
            )));
        }
        let a = StructuredMatrix {
            kind,
            n,
            m,
            s,
            r,
            data,
            corner: None,
            offsets,
        };
        a.with_corner(corner)
    }

    fn with_corner(mut self, corner: Option<Corner>) -> Result<Self> {
        match (&corner, self.kind.has_corner()) {
            (Some(_), false) => return Err(Error::CornerForbidden(self.kind.to_string())),
            (None, true) => {
                return Err(Error::InvalidParameter(format!(
                    "{} matrices require a corner block",
                    self.kind
                )))
            }
            _ => {}
        }
        if let Some(c) = &corner {
            if c.rows == 0 || c.cols == 0 || c.rows > self.n || c.cols > self.n {
                return Err(Error::DimensionMismatch(format!(
                    "corner {}x{} for n={}",
                    c.rows, c.cols, self.n
                )));
            }
            if c.data.len() != c.rows * c.cols {
                return Err(Error::DimensionMismatch(format!(
                    "corner {}x{} with {} entries",
                    c.rows,
                    c.cols,
                    c.data.len()
                )));
            }
            if self.kind == MatrixKind::Babd && c.position != CornerPosition::UpperRight {
                return Err(Error::InvalidParameter("BABD corner must be upper-right".into()));
            }
            for i in c.row_range(self.n) {
                for j in c.col_range(self.n) {
                    if self.in_band(i, j) {
                        return Err(Error::InvalidBandwidth(format!(
                            "corner entry ({i},{j}) overlaps the band"
                        )));
                    }
                }
            }
        }
        self.corner = corner;
        Ok(self)
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }
    pub fn n(&self) -> usize {
        self.n
    }
    /// Block size (1 for the scalar kinds).
    pub fn m(&self) -> usize {
        self.m
    }
    /// Lower (block) bandwidth.
    pub fn s(&self) -> usize {
        self.s
    }
    /// Upper (block) bandwidth.
    pub fn r(&self) -> usize {
        self.r
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn corner(&self) -> Option<&Corner> {
        self.corner.as_ref()
    }

    /// Number of block rows.
    pub fn block_rows(&self) -> usize {
        self.n / self.m
    }

    /// Scalar lower bandwidth of the body (without corner).
    pub fn lower_bandwidth(&self) -> usize {
        if self.kind.is_block() {
            (self.s + 1) * self.m - 1
        } else {
            self.s
        }
    }

    /// Scalar upper bandwidth of the body (without corner).
    pub fn upper_bandwidth(&self) -> usize {
        if self.kind.is_block() {
            (self.r + 1) * self.m - 1
        } else {
            self.r
        }
    }

    /// Column range of row `i` covered by the band storage.
    pub fn band_cols(&self, i: usize) -> std::ops::Range<usize> {
        if self.kind.is_block() {
            let k = i / self.m;
            let lo = k.saturating_sub(self.s);
            let hi = (k + self.r).min(self.block_rows() - 1);
            lo * self.m..(hi + 1) * self.m
        } else {
            i.saturating_sub(self.s)..(i + self.r + 1).min(self.n)
        }
    }

    /// True when `(i, j)` lies inside the band storage.
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        self.band_cols(i).contains(&j)
    }

    /// True when `(i, j)` is a structurally stored position.
    pub fn is_structural(&self, i: usize, j: usize) -> bool {
        self.in_band(i, j) || self.corner_index(i, j).is_some()
    }

    fn band_index(&self, i: usize, j: usize) -> Option<usize> {
        if !self.in_band(i, j) {
            return None;
        }
        if self.kind.is_block() {
            let m = self.m;
            let (bi, bj) = (i / m, j / m);
            let lo = bi.saturating_sub(self.s);
            Some(self.offsets[bi] + (bj - lo) * m * m + (i % m) * m + (j % m))
        } else {
            let d = j as isize - i as isize + self.s as isize;
            Some(self.offsets[d as usize] + i.min(j))
        }
    }

    fn corner_index(&self, i: usize, j: usize) -> Option<usize> {
        let c = self.corner.as_ref()?;
        let rr = c.row_range(self.n);
        let cr = c.col_range(self.n);
        if rr.contains(&i) && cr.contains(&j) {
            Some((i - rr.start) * c.cols + (j - cr.start))
        } else {
            None
        }
    }

    /// Entry `(i, j)`; zero outside the structure.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if let Some(k) = self.band_index(i, j) {
            return self.data[k];
        }
        match self.corner_index(i, j) {
            Some(k) => self.corner.as_ref().unwrap().data[k],
            None => 0.0,
        }
    }

    /// Overwrites a structural entry; returns false outside the structure.
    pub fn set_entry(&mut self, i: usize, j: usize, v: f64) -> bool {
        if let Some(k) = self.band_index(i, j) {
            self.data[k] = v;
            return true;
        }
        if let Some(k) = self.corner_index(i, j) {
            self.corner.as_mut().unwrap().data[k] = v;
            return true;
        }
        false
    }

    /// Structural entries of row `i` in increasing column order.
    pub fn row_entries(&self, i: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let corner_cols = self.corner.as_ref().and_then(|c| {
            c.row_range(self.n)
                .contains(&i)
                .then(|| (c.position, c.col_range(self.n)))
        });
        if let Some((CornerPosition::LowerLeft, cols)) = &corner_cols {
            for j in cols.clone() {
                out.push((j, self.entry(i, j)));
            }
        }
        for j in self.band_cols(i) {
            out.push((j, self.data[self.band_index(i, j).unwrap()]));
        }
        if let Some((CornerPosition::UpperRight, cols)) = &corner_cols {
            for j in cols.clone() {
                out.push((j, self.entry(i, j)));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Result<DenseMatrix> {
        self.to_dense_with_limit(DEFAULT_DENSE_LIMIT)
    }

    pub fn to_dense_with_limit(&self, limit: usize) -> Result<DenseMatrix> {
        if self.n > limit {
            return Err(Error::TooLargeForDense { n: self.n, limit });
        }
        let mut d = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row_entries(i) {
                d[(i, j)] = v;
            }
        }
        Ok(d)
    }

    /// `A x`, summing each row's stored entries left to right.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for n={}",
                x.len(),
                self.n
            )));
        }
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, v) in self.row_entries(i) {
                acc += v * x[j];
            }
            *yi = acc;
        }
        Ok(y)
    }

    /// Random instance, deterministic in `seed`. With `diag_dominance > 1`
    /// every diagonal entry is rescaled to `diag_dominance` times the sum of
    /// the absolute off-diagonal entries of its row. Circulant-like matrices
    /// (with `r ≥ 1`) are made dominant in their row-permuted form instead,
    /// i.e. on the entries `(i, (i + r) mod n)`.
    pub fn generate_random(
        kind: MatrixKind,
        n: usize,
        m: usize,
        s: usize,
        r: usize,
        seed: u64,
        diag_dominance: f64,
    ) -> Result<Self> {
        if !(diag_dominance >= 0.0) || !diag_dominance.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "diag_dominance must be a finite value >= 0, got {diag_dominance}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let offsets = layout(kind, n, m, s, r)?;
        let len = *offsets.last().unwrap();
        let data: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let corner = match kind {
            MatrixKind::Babd => Some(Corner {
                position: CornerPosition::UpperRight,
                rows: m,
                cols: m,
                data: (0..m * m).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            }),
            MatrixKind::CirculantLike => {
                let k = r.max(1);
                Some(Corner {
                    position: CornerPosition::LowerLeft,
                    rows: k,
                    cols: k,
                    data: (0..k * k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                })
            }
            _ => None,
        };
        let mut a = Self::make(kind, n, m, s, r, data, corner)?;
        if diag_dominance > 1.0 {
            if kind == MatrixKind::CirculantLike && r >= 1 {
                // dominate the entries that land on the diagonal once the
                // lower-left corner rows are cycled to the top
                let k = r;
                a.dominate(diag_dominance, |i| (i + k) % n);
            } else {
                a.make_diagonally_dominant(diag_dominance);
            }
        }
        Ok(a)
    }

    /// Rescales each diagonal entry to `factor · Σ_{j≠i} |a_ij|` (keeping its sign).
    pub fn make_diagonally_dominant(&mut self, factor: f64) {
        self.dominate(factor, |i| i);
    }

    fn dominate(&mut self, factor: f64, pivot: impl Fn(usize) -> usize) {
        for i in 0..self.n {
            let c = pivot(i);
            let off: f64 = self
                .row_entries(i)
                .iter()
                .filter(|(j, _)| *j != c)
                .map(|(_, v)| v.abs())
                .sum();
            let d = self.entry(i, c);
            let sign = if d < 0.0 { -1.0 } else { 1.0 };
            let mag = if off > 0.0 { factor * off } else { 1.0 };
            self.set_entry(i, c, sign * mag);
        }
    }

    /// Serializes in the STRUCTMAT version 1 text format.
    pub fn write_matrix(&self) -> String {
        let mut out = format!(
            "STRUCTMAT 1 {} {} {} {} {}",
            self.kind, self.n, self.m, self.s, self.r
        );
        if let Some(c) = &self.corner {
            out.push_str(&format!(" {} {}", c.rows, c.cols));
            if c.position == CornerPosition::LowerLeft {
                out.push_str(" ll");
            }
        }
        out.push('\n');
        for v in &self.data {
            out.push_str(&format_hex(*v));
            out.push('\n');
        }
        if let Some(c) = &self.corner {
            for v in &c.data {
                out.push_str(&format_hex(*v));
                out.push('\n');
            }
        }
        out
    }

    /// Parses the STRUCTMAT version 1 text format.
    pub fn parse_matrix(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty input".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let perr = |msg: String| Error::Parse { line: hline, msg };
        if fields.first() != Some(&"STRUCTMAT") {
            return Err(perr("expected STRUCTMAT header".into()));
        }
        match fields.get(1) {
            Some(&"1") => {}
            Some(v) => return Err(Error::UnsupportedVersion(v.to_string())),
            None => return Err(perr("missing version".into())),
        }
        if !(7..=10).contains(&fields.len()) {
            return Err(perr(format!("header has {} fields", fields.len())));
        }
        let kind = MatrixKind::from_name(fields[2]).ok_or_else(|| perr(format!("unknown kind {}", fields[2])))?;
        let num = |k: usize| -> Result<usize> {
            fields[k]
                .parse::<usize>()
                .map_err(|_| perr(format!("bad integer field '{}'", fields[k])))
        };
        let (n, m, s, r) = (num(3)?, num(4)?, num(5)?, num(6)?);
        let corner_shape = if fields.len() >= 9 {
            let position = match fields.get(9) {
                None | Some(&"ur") => CornerPosition::UpperRight,
                Some(&"ll") => CornerPosition::LowerLeft,
                Some(other) => return Err(perr(format!("unknown corner position {other}"))),
            };
            Some((num(7)?, num(8)?, position))
        } else if fields.len() == 8 {
            return Err(perr("corner needs both rows and cols".into()));
        } else {
            None
        };
        let offsets = layout(kind, n, m, s, r).map_err(|e| perr(e.to_string()))?;
        let body_len = *offsets.last().unwrap();
        let corner_len = corner_shape.map_or(0, |(cr, cc, _)| cr * cc);
        let mut values = Vec::with_capacity(body_len + corner_len);
        for (ln, l) in lines {
            if values.len() == body_len + corner_len {
                return Err(Error::Parse {
                    line: ln,
                    msg: "trailing data".into(),
                });
            }
            let v = parse_hex(l).ok_or_else(|| Error::Parse {
                line: ln,
                msg: format!("bad real '{l}'"),
            })?;
            values.push(v);
        }
        if values.len() != body_len + corner_len {
            return Err(perr(format!(
                "expected {} values, found {}",
                body_len + corner_len,
                values.len()
            )));
        }
        let corner_data = values.split_off(body_len);
        let corner = corner_shape.map(|(rows, cols, position)| Corner {
            position,
            rows,
            cols,
            data: corner_data,
        });
        Self::make(kind, n, m, s, r, values, corner).map_err(|e| perr(e.to_string()))
    }
}

/// Storage offsets: `offsets[k]` is where diagonal/block row `k` starts; the
/// final element is the total length.
fn layout(kind: MatrixKind, n: usize, m: usize, s: usize, r: usize) -> Result<Vec<usize>> {
    if n == 0 || m == 0 {
        return Err(Error::DimensionMismatch("n and m must be positive".into()));
    }
    match kind {
        MatrixKind::Banded | MatrixKind::CirculantLike => {
            if m != 1 {
                return Err(Error::DimensionMismatch(format!("{kind} matrices are scalar (m = 1)")));
            }
            if s + r + 1 > n {
                return Err(Error::InvalidBandwidth(format!("s={s}, r={r} too wide for n={n}")));
            }
            let mut offsets = Vec::with_capacity(s + r + 2);
            let mut acc = 0;
            for d in -(s as isize)..=(r as isize) {
                offsets.push(acc);
                acc += n - d.unsigned_abs();
            }
            offsets.push(acc);
            Ok(offsets)
        }
        MatrixKind::BlockTridiagonal | MatrixKind::Abd | MatrixKind::Babd => {
            if n % m != 0 {
                return Err(Error::DimensionMismatch(format!("n={n} is not a multiple of m={m}")));
            }
            let nb = n / m;
            let (es, er) = if kind == MatrixKind::BlockTridiagonal { (1, 1) } else { (1, 0) };
            if (s, r) != (es, er) {
                return Err(Error::InvalidBandwidth(format!(
                    "{kind} requires s={es}, r={er} in block units, got s={s}, r={r}"
                )));
            }
            if nb < 2 {
                return Err(Error::InvalidBandwidth(format!("{kind} needs at least two block rows")));
            }
            let mut offsets = Vec::with_capacity(nb + 1);
            let mut acc = 0;
            for k in 0..nb {
                offsets.push(acc);
                let lo = k.saturating_sub(s);
                let hi = (k + r).min(nb - 1);
                acc += (hi - lo + 1) * m * m;
            }
            offsets.push(acc);
            Ok(offsets)
        }
    }
}

/// Writes a vector in the VEC version 1 text format.
pub fn write_vector(x: &[f64]) -> String {
    let mut out = format!("VEC 1 {}\n", x.len());
    for v in x {
        out.push_str(&format_hex(*v));
        out.push('\n');
    }
    out
}

/// Parses the VEC version 1 text format.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty input".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 || fields[0] != "VEC" {
        return Err(Error::Parse {
            line: hline,
            msg: "expected 'VEC 1 <length>'".into(),
        });
    }
    if fields[1] != "1" {
        return Err(Error::UnsupportedVersion(fields[1].to_string()));
    }
    let len: usize = fields[2].parse().map_err(|_| Error::Parse {
        line: hline,
        msg: format!("bad length '{}'", fields[2]),
    })?;
    let mut x = Vec::with_capacity(len);
    for (ln, l) in lines {
        if x.len() == len {
            return Err(Error::Parse {
                line: ln,
                msg: "trailing data".into(),
            });
        }
        x.push(parse_hex(l).ok_or_else(|| Error::Parse {
            line: ln,
            msg: format!("bad real '{l}'"),
        })?);
    }
    if x.len() != len {
        return Err(Error::Parse {
            line: hline,
            msg: format!("expected {len} values, found {}", x.len()),
        });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toeplitz3() -> StructuredMatrix {
        StructuredMatrix::make(
            MatrixKind::Banded,
            3,
            1,
            1,
            1,
            vec![-1.0, -1.0, 2.0, 2.0, 2.0, -1.0, -1.0],
            None,
        )
        .unwrap()
    }

    #[test]
    fn banded_identity() {
        let a = StructuredMatrix::make(MatrixKind::Banded, 3, 1, 0, 0, vec![1.0; 3], None).unwrap();
        assert_eq!(a.to_dense().unwrap(), DenseMatrix::identity(3));
        assert_eq!(a.matvec(&[3.0, -1.0, 4.0]).unwrap(), vec![3.0, -1.0, 4.0]);
    }

    #[test]
    fn toeplitz_layout() {
        let a = toeplitz3();
        let d = a.to_dense().unwrap();
        assert_eq!(
            d,
            DenseMatrix::from_rows(&[vec![2.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 2.0]])
        );
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn babd_corner_placement() {
        let data = vec![0.5; (2 * 4 - 1) * 4];
        let corner = Corner::upper_right(DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]));
        let a = StructuredMatrix::make(MatrixKind::Babd, 8, 2, 1, 0, data, Some(corner)).unwrap();
        let d = a.to_dense().unwrap();
        // hand-placed oracle: rows 1-2, cols 7-8 (1-based) hold the corner
        for i in 0..2 {
            for j in 6..8 {
                assert_eq!(d[(i, j)], 1.0);
            }
        }
        // first block row: only its diagonal block and the corner
        for j in 2..6 {
            assert_eq!(d[(0, j)], 0.0);
        }
        let y = a.matvec(&[1.0; 8]).unwrap();
        assert_eq!(y[0], 0.5 + 0.5 + 1.0 + 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            StructuredMatrix::make(MatrixKind::Banded, 3, 1, 1, 1, vec![1.0; 6], None),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            StructuredMatrix::make(MatrixKind::Banded, 4, 1, 5, 0, vec![], None),
            Err(Error::InvalidBandwidth(_))
        ));
        let c = Corner::upper_right(DenseMatrix::identity(1));
        assert!(matches!(
            StructuredMatrix::make(MatrixKind::Banded, 3, 1, 0, 0, vec![1.0; 3], Some(c)),
            Err(Error::CornerForbidden(_))
        ));
        assert!(matches!(
            StructuredMatrix::make(MatrixKind::BlockTridiagonal, 12, 3, 1, 0, vec![], None),
            Err(Error::InvalidBandwidth(_))
        ));
    }

    #[test]
    fn corner_overlapping_band_is_rejected() {
        let c = Corner::upper_right(DenseMatrix::identity(3));
        let r = StructuredMatrix::make(MatrixKind::CirculantLike, 4, 1, 1, 1, vec![1.0; 10], Some(c));
        assert!(matches!(r, Err(Error::InvalidBandwidth(_))));
    }

    #[test]
    fn generator_is_deterministic_and_dominant() {
        let a = StructuredMatrix::generate_random(MatrixKind::Banded, 10, 1, 1, 1, 1, 2.0).unwrap();
        let b = StructuredMatrix::generate_random(MatrixKind::Banded, 10, 1, 1, 1, 1, 2.0).unwrap();
        assert_eq!(a, b);
        for i in 0..10 {
            let off: f64 = a.row_entries(i).iter().filter(|e| e.0 != i).map(|e| e.1.abs()).sum();
            assert!(a.entry(i, i).abs() >= 2.0 * off * (1.0 - 1e-15));
        }
        assert!(StructuredMatrix::generate_random(MatrixKind::Banded, 10, 1, 1, 1, 1, -1.0).is_err());
    }

    #[test]
    fn header_example_parses() {
        let mut text = String::from("STRUCTMAT 1 banded 4 1 1 1\n");
        for _ in 0..10 {
            text.push_str("0x1p+0\n");
        }
        let a = StructuredMatrix::parse_matrix(&text).unwrap();
        assert_eq!((a.n(), a.s(), a.r()), (4, 1, 1));
        assert_eq!(a.entry(3, 0), 0.0);
        assert_eq!(a.entry(2, 3), 1.0);
    }

    #[test]
    fn parse_errors() {
        let text = "STRUCTMAT 1 banded 4 1 5 1\n";
        assert!(matches!(StructuredMatrix::parse_matrix(text), Err(Error::Parse { line: 1, .. })));
        let text = "STRUCTMAT 2 banded 4 1 1 1\n";
        assert!(matches!(StructuredMatrix::parse_matrix(text), Err(Error::UnsupportedVersion(_))));
        let text = "STRUCTMAT 1 banded 2 1 0 0\n0x1p+0\nbogus\n";
        assert!(matches!(StructuredMatrix::parse_matrix(text), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn identity_roundtrip_and_vectors() {
        let a = StructuredMatrix::make(MatrixKind::Banded, 2, 1, 0, 0, vec![1.0, 1.0], None).unwrap();
        assert_eq!(StructuredMatrix::parse_matrix(&a.write_matrix()).unwrap(), a);
        let x = vec![1.5, -0.0, 1e-300];
        let back = parse_vector(&write_vector(&x)).unwrap();
        assert_eq!(back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), x.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
