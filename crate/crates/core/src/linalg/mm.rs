//! Matrix Market coordinate files (real, general or symmetric).

use std::fs;
use std::io::Write;
use std::path::Path;

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

pub fn read_matrix_market(path: &Path) -> Result<CsrMatrix> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_matrix_market(&text, path)
}

/// Parses file contents; `path` is only used in error messages.
pub fn parse_matrix_market(text: &str, path: &Path) -> Result<CsrMatrix> {
    let err = |line: usize, msg: String| Error::Ingestion { path: path.to_path_buf(), line, msg };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (ln, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let h: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if h.len() != 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" {
        return Err(err(ln, format!("bad header `{header}`")));
    }
    if h[2] != "coordinate" {
        return Err(err(ln, format!("unsupported format `{}`", h[2])));
    }
    match h[3].as_str() {
        "real" | "double" | "integer" => {}
        other => return Err(err(ln, format!("unsupported field `{other}`"))),
    }
    let sym = match h[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(err(ln, format!("unsupported symmetry `{other}`"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (ln, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                if tok.len() != 3 {
                    return Err(err(ln, "size line needs rows cols nnz".into()));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|e| err(ln, format!("bad size `{s}`: {e}")));
                size = Some((p(tok[0])?, p(tok[1])?, p(tok[2])?));
                triplets.reserve(size.unwrap().2 * 2);
            }
            Some((rows, cols, _)) => {
                if tok.len() != 3 {
                    return Err(err(ln, format!("expected `row col value`, got {} fields", tok.len())));
                }
                let i: usize = tok[0].parse().map_err(|e| err(ln, format!("bad row index: {e}")))?;
                let j: usize = tok[1].parse().map_err(|e| err(ln, format!("bad column index: {e}")))?;
                let v: f64 = tok[2].parse().map_err(|e| err(ln, format!("bad value: {e}")))?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(err(ln, format!("entry ({i}, {j}) outside {rows}x{cols}")));
                }
                if sym == Symmetry::Symmetric && j > i {
                    return Err(err(ln, format!("symmetric file has upper-triangle entry ({i}, {j})")));
                }
                triplets.push((i - 1, j - 1, v));
                if sym == Symmetry::Symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| err(text.lines().count().max(1), "missing size line".into()))?;
    let stored = match sym {
        Symmetry::General => triplets.len(),
        Symmetry::Symmetric => triplets.iter().filter(|t| t.0 >= t.1).count(),
    };
    if stored != nnz {
        return Err(err(text.lines().count(), format!("declared {nnz} entries, found {stored}")));
    }
    CsrMatrix::from_triplets(rows, cols, &triplets).map_err(|e| err(0, e.to_string()))
}

/// Writes `a` in coordinate format. Symmetric matrices keep only their
/// lower triangle.
pub fn write_matrix_market(path: &Path, a: &CsrMatrix) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let sym = a.is_symmetric();
    let entries: Vec<_> = a.triplets().filter(|&(i, j, _)| !sym || i >= j).collect();
    let mut out = String::new();
    out.push_str(&format!(
        "%%MatrixMarket matrix coordinate real {}\n",
        if sym { "symmetric" } else { "general" }
    ));
    out.push_str(&format!("{} {} {}\n", a.rows(), a.cols(), entries.len()));
    for (i, j, v) in entries {
        out.push_str(&format!("{} {} {:e}\n", i + 1, j + 1, v));
    }
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(out.as_bytes()).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<CsrMatrix> {
        parse_matrix_market(s, Path::new("test.mtx"))
    }

    #[test]
    fn symmetric_expanded() {
        let a = parse("%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n1 1 2.0\n2 1 -1.0\n2 2 2.0\n").unwrap();
        let d = a.to_dense();
        assert_eq!(d, crate::linalg::DenseMatrix::from_rows(&[&[2.0, -1.0], &[-1.0, 2.0]]).unwrap());
    }

    #[test]
    fn empty_list() {
        let a = parse("%%MatrixMarket matrix coordinate real general\n% comment\n3 2 0\n").unwrap();
        assert_eq!((a.rows(), a.cols(), a.nnz()), (3, 2, 0));
    }

    #[test]
    fn duplicates_sum() {
        let a = parse("%%MatrixMarket matrix coordinate real general\n1 1 2\n1 1 1.0\n1 1 1.5\n").unwrap();
        assert_eq!(a.get(0, 0), 2.5);
    }

    #[test]
    fn errors_name_line() {
        let e = parse("%%MatrixMarket matrix coordinate pattern general\n1 1 1\n1 1\n").unwrap_err();
        assert!(matches!(e, Error::Ingestion { line: 1, .. }), "{e}");
        let e = parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 1.0\n").unwrap_err();
        assert!(matches!(e, Error::Ingestion { line: 3, .. }), "{e}");
        let e = parse("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n").unwrap_err();
        assert!(matches!(e, Error::Ingestion { line: 1, .. }));
    }
}
