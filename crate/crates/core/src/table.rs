//! CSV output shared by every sweep: an optional `# ` metadata line, a
//! header row, then one row per record.

use std::io::Write;

use serde::Serialize;

use crate::error::{config, Result};

pub fn write_csv<W: Write, T: Serialize>(mut out: W, rows: &[T], meta: Option<&str>) -> Result<()> {
    if let Some(m) = meta {
        writeln!(out, "# {m}").map_err(|e| config(format!("write failed: {e}")))?;
    }
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| config(format!("csv write failed: {e}")))?;
    }
    w.flush().map_err(|e| config(format!("csv write failed: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        x: f64,
        tag: Option<&'static str>,
    }

    #[test]
    fn meta_header_rows() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[Row { x: 0.5, tag: None }, Row { x: 1e-20, tag: Some("a") }], Some("{\"s\":1}")).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# {\"s\":1}\nx,tag\n0.5,\n1e-20,a\n");
    }
}
