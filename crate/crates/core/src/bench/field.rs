use std::io::Write;

use super::BenchError;
use crate::design::Domain;
use crate::gp::Surrogate;

/// Regular grid over the domain's bounding box with `resolution[k]` points
/// along axis `k` (endpoints included; one point sits at the midpoint).
/// Points outside the domain are skipped. The first axis varies slowest.
pub fn field_grid(dom: &Domain, resolution: &[usize]) -> Result<Vec<Vec<f64>>, BenchError> {
    if resolution.len() != dom.dim() || resolution.contains(&0) {
        return Err(BenchError::Config(format!(
            "field resolution {resolution:?} does not fit a {}-dimensional domain",
            dom.dim()
        )));
    }
    let (lo, hi) = dom.bounding_box();
    let axes: Vec<Vec<f64>> = (0..dom.dim())
        .map(|k| {
            let r = resolution[k];
            if r == 1 {
                vec![0.5 * (lo[k] + hi[k])]
            } else {
                (0..r).map(|i| lo[k] + (hi[k] - lo[k]) * i as f64 / (r - 1) as f64).collect()
            }
        })
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out.retain(|p| dom.contains(p));
    Ok(out)
}

/// Writes `<names…>,mean,variance` for the surrogate over [`field_grid`].
pub fn export_field<W: Write>(s: &Surrogate, dom: &Domain, resolution: &[usize], w: W) -> Result<(), BenchError> {
    let grid = field_grid(dom, resolution)?;
    let preds = s.predict_many(&grid)?;
    let io = |e: csv::Error| BenchError::Io(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = dom.names().iter().map(|n| n.to_string()).collect();
    header.extend(["mean".into(), "variance".into()]);
    out.write_record(&header).map_err(io)?;
    for (x, p) in grid.iter().zip(preds) {
        let row: Vec<String> =
            x.iter().map(f64::to_string).chain([p.mean.to_string(), p.variance.to_string()]).collect();
        out.write_record(&row).map_err(io)?;
    }
    out.flush().map_err(|e| BenchError::Io(e.to_string()))
}
