//! Training-loss logs: CSV with `# key=value` header lines describing the
//! run, then one row per optimization step. The SSIM column reads `nan`
//! whenever the term was disabled.

use std::path::Path;

use crate::error::Result;
use crate::optim::LossRecord;

pub const LOSS_CSV_COLUMNS: &str = "epoch,camera,loss,l1,ssim,vertices,faces";

pub fn loss_csv(records: &[LossRecord], meta: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str(LOSS_CSV_COLUMNS);
    out.push('\n');
    for r in records {
        let ssim = match r.parts.ssim {
            Some(s) => s.to_string(),
            None => "nan".to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch, r.camera, r.parts.loss, r.parts.l1, ssim, r.vertices, r.faces
        ));
    }
    out
}

pub fn write_loss_csv(
    path: &Path,
    records: &[LossRecord],
    meta: &[(String, String)],
) -> Result<()> {
    std::fs::write(path, loss_csv(records, meta))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::LossParts;

    fn record(epoch: usize, camera: usize, ssim: Option<f64>) -> LossRecord {
        LossRecord {
            epoch,
            camera,
            parts: LossParts {
                loss: 0.125,
                l1: 0.25,
                ssim,
            },
            vertices: 90,
            faces: 80,
        }
    }

    #[test]
    fn header_comments_then_columns_then_rows() {
        let meta = vec![
            ("seed".to_string(), "7".to_string()),
            ("lambda".to_string(), "0.6".to_string()),
        ];
        let text = loss_csv(&[record(1, 2, Some(0.5)), record(1, 0, None)], &meta);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed=7");
        assert_eq!(lines[1], "# lambda=0.6");
        assert_eq!(lines[2], LOSS_CSV_COLUMNS);
        assert_eq!(lines[3], "1,2,0.125,0.25,0.5,90,80");
        assert_eq!(lines[4], "1,0,0.125,0.25,nan,90,80");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn empty_log_still_has_the_column_header() {
        let text = loss_csv(&[], &[]);
        assert_eq!(text, format!("{LOSS_CSV_COLUMNS}\n"));
    }
}
