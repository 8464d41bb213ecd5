use std::path::Path;

use super::config::{GuessSpec, QuoteSpec};
use crate::error::{Error, Result};

pub const MARKET_COLUMNS: [&str; 7] = ["id", "s0", "r", "q", "strike", "maturity", "price"];
pub const GUESS_COLUMNS: [&str; 5] = ["id", "sigma_nu", "rho", "kappa_nu", "mu_nu"];

/// Floats are written with 17 significant digits so they round-trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_err(file: &Path, row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.display().to_string(),
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Reads a headed CSV whose header must equal `columns`. Returns the data
/// rows with their 1-based row numbers (the header is row 0).
fn read_rows(path: &Path, columns: &[&str]) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            k => parse_err(path, 0, "", format!("{k:?}")),
        })?;
    let header = rdr
        .headers()
        .map_err(|e| parse_err(path, 0, "", e.to_string()))?
        .clone();
    let got: Vec<&str> = header.iter().collect();
    if got != columns {
        return Err(parse_err(
            path,
            0,
            "",
            format!("expected header {}, got {}", columns.join(","), got.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| parse_err(path, row, "", e.to_string()))?;
        rows.push((row, rec.iter().map(str::to_string).collect()));
    }
    Ok(rows)
}

fn number(path: &Path, row: usize, column: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| parse_err(path, row, column, format!("\"{s}\" is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, row, column, format!("{s} is not finite")));
    }
    Ok(v)
}

/// Market quotes from `id,s0,r,q,strike,maturity,price`. Every row is
/// checked; errors name the file, row and column.
pub fn load_market_csv(path: &Path) -> Result<Vec<QuoteSpec>> {
    let rows = read_rows(path, &MARKET_COLUMNS)?;
    let mut out = Vec::with_capacity(rows.len());
    for (row, f) in rows {
        if f[0].is_empty() {
            return Err(parse_err(path, row, "id", "empty id"));
        }
        let mut v = [0.0; 6];
        for (c, slot) in v.iter_mut().enumerate() {
            *slot = number(path, row, MARKET_COLUMNS[c + 1], &f[c + 1])?;
        }
        let spec = QuoteSpec {
            id: f[0].clone(),
            s0: v[0],
            r: v[1],
            q: v[2],
            strike: v[3],
            maturity: v[4],
            price: v[5],
        };
        spec.quote()
            .check()
            .map_err(|(column, msg)| parse_err(path, row, column, msg))?;
        if out.iter().any(|q: &QuoteSpec| q.id == spec.id) {
            return Err(parse_err(path, row, "id", format!("duplicate id \"{}\"", spec.id)));
        }
        out.push(spec);
    }
    if out.is_empty() {
        return Err(parse_err(path, 0, "", "no data rows"));
    }
    Ok(out)
}

/// Initial guesses from `id,sigma_nu,rho,kappa_nu,mu_nu`.
pub fn load_guesses_csv(path: &Path) -> Result<Vec<GuessSpec>> {
    let rows = read_rows(path, &GUESS_COLUMNS)?;
    let mut out = Vec::with_capacity(rows.len());
    for (row, f) in rows {
        if f[0].is_empty() {
            return Err(parse_err(path, row, "id", "empty id"));
        }
        let mut v = [0.0; 4];
        for (c, slot) in v.iter_mut().enumerate() {
            *slot = number(path, row, GUESS_COLUMNS[c + 1], &f[c + 1])?;
        }
        if out.iter().any(|g: &GuessSpec| g.id == f[0]) {
            return Err(parse_err(path, row, "id", format!("duplicate id \"{}\"", f[0])));
        }
        out.push(GuessSpec {
            id: f[0].clone(),
            sigma_nu: v[0],
            rho: v[1],
            kappa_nu: v[2],
            mu_nu: v[3],
        });
    }
    Ok(out)
}

/// In-memory CSV table.
#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv_bytes())
    }
}

/// Writes through a temporary sibling file and a rename, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn reads_market_rows() {
        let d = tempfile::tempdir().unwrap();
        let p = write(
            d.path(),
            "m.csv",
            "id,s0,r,q,strike,maturity,price\nA,100,0.03,0.01,100,0.25,3.5\nB, 100 ,0.03,0,105,0.5,6\n",
        );
        let q = load_market_csv(&p).unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q[1].id, "B");
        assert_eq!(q[1].strike, 105.0);
        assert_eq!(q[1].quote().observed_price, 6.0);
    }

    #[test]
    fn zero_strike_names_row_and_column() {
        let d = tempfile::tempdir().unwrap();
        let p = write(
            d.path(),
            "m.csv",
            "id,s0,r,q,strike,maturity,price\nA,100,0.03,0.01,0,0.25,3.5\n",
        );
        match load_market_csv(&p).unwrap_err() {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "strike");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let d = tempfile::tempdir().unwrap();
        let cases = [
            ("id,s0,r,q,strike,maturity\nA,1,1,1,1,1\n", 0, ""),
            ("id,s0,r,q,strike,maturity,price\nA,100,abc,0,100,1,3\n", 1, "r"),
            ("id,s0,r,q,strike,maturity,price\nA,100,0.03,0,100,1,3\nA,100,0.03,0,100,1,3\n", 2, "id"),
            ("id,s0,r,q,strike,maturity,price\nA,100,0.03,0,100,-1,3\n", 1, "maturity"),
            ("id,s0,r,q,strike,maturity,price\nA,100,0.03,0,100,1,NaN\n", 1, "price"),
            ("id,s0,r,q,strike,maturity,price\n", 0, ""),
        ];
        for (body, want_row, want_col) in cases {
            let p = write(d.path(), "bad.csv", body);
            match load_market_csv(&p).unwrap_err() {
                Error::Parse { row, column, .. } => {
                    assert_eq!((row, column.as_str()), (want_row, want_col), "{body}");
                }
                e => panic!("unexpected {e}"),
            }
        }
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_market_csv(Path::new("/nonexistent/m.csv")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err}");
    }

    #[test]
    fn reads_guesses() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "g.csv", "id,sigma_nu,rho,kappa_nu,mu_nu\nx,0.2,-0.3,5,0.6\n");
        let g = load_guesses_csv(&p).unwrap();
        assert_eq!(g[0].params(0.05).kappa_nu, 5.0);
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 4.8200123456789e-7, -2.5e10] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn atomic_write_creates_directories() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("a/b/t.csv");
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), fmt_f64(0.5)]);
        t.write(&p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "a,b\n1,5.0000000000000000e-1\n");
        assert!(!d.path().join("a/b/t.csv.tmp").exists());
    }
}
