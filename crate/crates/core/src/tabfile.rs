//! Tabulated vector fields on disk.
//!
//! A file starts with a UTF-8 text header terminated by a line `end`,
//! followed by the node values of every tabulated chart in header order as
//! row-major little-endian `f64`. Absent nodes are stored as NaN.
//!
//! ```text
//! ATLASDIFFEO-TAB v1
//! field <name> dim <d> slots <s> charts <n>
//! chart <id> zero
//! chart <id> width <w> h <h> origin <o..> lo <k..> shape <n..> bounds <lo..> <hi..>
//! end
//! ```

use std::io::{BufRead, Read, Write};
use std::path::Path;

use crate::calculus::{ChartField, LocalizedField, Tabulation};
use crate::error::{Error, Result};

pub const MAGIC: &str = "ATLASDIFFEO-TAB v1";

fn bad(msg: impl Into<String>) -> Error {
    Error::TabulationFormat(msg.into())
}

fn join(v: impl IntoIterator<Item = impl ToString>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Write `field` with one header line per chart id. Every chart must be
/// tabulated or zero.
pub fn write_field<W: Write>(mut out: W, field: &LocalizedField, chart_ids: &[String]) -> Result<()> {
    if chart_ids.len() != field.charts.len() {
        return Err(Error::DimensionMismatch {
            expected: field.charts.len(),
            got: chart_ids.len(),
        });
    }
    if field.name.contains(char::is_whitespace) {
        return Err(bad(format!("field name `{}` contains whitespace", field.name)));
    }
    let mut head = String::new();
    head.push_str(MAGIC);
    head.push('\n');
    head.push_str(&format!(
        "field {} dim {} slots {} charts {}\n",
        field.name,
        field.dim,
        field.slots,
        field.charts.len()
    ));
    for (id, cf) in chart_ids.iter().zip(&field.charts) {
        match cf {
            ChartField::Zero => head.push_str(&format!("chart {id} zero\n")),
            ChartField::Tabulated(t) => {
                let lo: Vec<f64> = t.point(&t.lo);
                let top: Vec<i64> = t.lo.iter().zip(&t.shape).map(|(k, n)| k + *n as i64 - 1).collect();
                let hi: Vec<f64> = t.point(&top);
                head.push_str(&format!(
                    "chart {id} width {} h {:e} origin {} lo {} shape {} bounds {} {}\n",
                    t.width,
                    t.h,
                    join(t.origin.iter().map(|v| format!("{v:e}"))),
                    join(&t.lo),
                    join(&t.shape),
                    join(lo.iter().map(|v| format!("{v:e}"))),
                    join(hi.iter().map(|v| format!("{v:e}"))),
                ));
            }
            _ => return Err(bad(format!("chart `{id}` is not tabulated"))),
        }
    }
    head.push_str("end\n");
    out.write_all(head.as_bytes())?;
    for cf in &field.charts {
        if let ChartField::Tabulated(t) = cf {
            let mut buf = Vec::with_capacity(t.values.len() * 8);
            for v in &t.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
    }
    Ok(())
}

pub fn save_field(path: &Path, field: &LocalizedField, chart_ids: &[String]) -> Result<()> {
    let mut buf = Vec::new();
    write_field(&mut buf, field, chart_ids)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &buf)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Words<'a> {
    it: std::str::SplitWhitespace<'a>,
    line: &'a str,
}

impl<'a> Words<'a> {
    fn new(line: &'a str) -> Self {
        Words {
            it: line.split_whitespace(),
            line,
        }
    }

    fn word(&mut self) -> Result<&'a str> {
        self.it.next().ok_or_else(|| bad(format!("truncated line `{}`", self.line)))
    }

    fn key(&mut self, k: &str) -> Result<()> {
        let w = self.word()?;
        if w == k {
            Ok(())
        } else {
            Err(bad(format!("expected `{k}`, found `{w}`")))
        }
    }

    fn parse<T: std::str::FromStr>(&mut self) -> Result<T> {
        let w = self.word()?;
        w.parse().map_err(|_| bad(format!("bad number `{w}`")))
    }

    fn list<T: std::str::FromStr>(&mut self, n: usize) -> Result<Vec<T>> {
        (0..n).map(|_| self.parse()).collect()
    }
}

/// Read a field; returns the chart ids from the header with it.
pub fn read_field<R: Read>(input: R) -> Result<(Vec<String>, LocalizedField)> {
    let mut r = std::io::BufReader::new(input);
    let mut line = String::new();
    let mut next = |r: &mut std::io::BufReader<R>| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("unexpected end of header"));
        }
        Ok(line.trim_end().to_string())
    };
    if next(&mut r)? != MAGIC {
        return Err(bad("missing magic line"));
    }
    let first = next(&mut r)?;
    let mut w = Words::new(&first);
    w.key("field")?;
    let name = w.word()?.to_string();
    w.key("dim")?;
    let dim: usize = w.parse()?;
    w.key("slots")?;
    let slots: usize = w.parse()?;
    w.key("charts")?;
    let n: usize = w.parse()?;
    let mut ids = Vec::with_capacity(n);
    let mut shells: Vec<Option<Tabulation>> = Vec::with_capacity(n);
    for _ in 0..n {
        let l = next(&mut r)?;
        let mut w = Words::new(&l);
        w.key("chart")?;
        ids.push(w.word()?.to_string());
        match w.word()? {
            "zero" => shells.push(None),
            "width" => {
                let width: usize = w.parse()?;
                w.key("h")?;
                let h: f64 = w.parse()?;
                w.key("origin")?;
                let origin = w.list(dim)?;
                w.key("lo")?;
                let lo = w.list(dim)?;
                w.key("shape")?;
                let shape = w.list(dim)?;
                if width != dim.pow(slots as u32 + 1) {
                    return Err(bad(format!("width {width} does not match dim {dim}, slots {slots}")));
                }
                shells.push(Some(Tabulation {
                    origin,
                    h,
                    lo,
                    shape,
                    width,
                    values: Vec::new(),
                }));
            }
            other => return Err(bad(format!("unknown chart kind `{other}`"))),
        }
    }
    if next(&mut r)? != "end" {
        return Err(bad("missing `end` line"));
    }
    let mut charts = Vec::with_capacity(n);
    for shell in shells {
        match shell {
            None => charts.push(ChartField::Zero),
            Some(mut t) => {
                let count = t.shape.iter().product::<usize>() * t.width;
                let mut bytes = vec![0u8; count * 8];
                r.read_exact(&mut bytes).map_err(|_| bad("truncated value block"))?;
                t.values = bytes
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                    .collect();
                charts.push(ChartField::Tabulated(t));
            }
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes after value blocks"));
    }
    Ok((
        ids,
        LocalizedField {
            name,
            dim,
            slots,
            charts,
        },
    ))
}

pub fn load_field(path: &Path) -> Result<(Vec<String>, LocalizedField)> {
    read_field(std::fs::File::open(path)?)
}
