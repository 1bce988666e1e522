//! CSV readers and writers for every artifact the pipeline produces.
//!
//! Each file starts with a `# bumpfield <kind> v1` comment line naming the
//! format; readers skip comment lines.

use std::fs::File;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bifurcation::{BranchPoint, SweepPoint};
use crate::dmap::{Alignment, DiffusionMapModel};
use crate::error::{Error, Result};
use crate::field_sim::FieldState;
use crate::kramers::{SwitchRecord, TauPoint};
use crate::langevin::{DriftDiffusionCurve, PotentialCurve};

pub const FORMAT_VERSION: u32 = 1;

/// Shortest representation that round-trips.
pub fn num(x: f64) -> String {
    format!("{x}")
}

fn io_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Parse(format!("{other:?}")),
    }
}

pub fn write_csv<I>(path: &Path, kind: &str, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    use std::io::Write;
    let mut file = File::create(path)?;
    writeln!(file, "# bumpfield {kind} v{FORMAT_VERSION}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(io_err)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::DimensionMismatch {
                expected: header.len(),
                got: r.len(),
            });
        }
        w.write_record(&r).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Header and numeric rows of a CSV file.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(io_err)?;
    let header: Vec<String> = r
        .headers()
        .map_err(io_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(io_err)?;
        rows.push(
            rec.iter()
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| {
                        Error::Parse(format!(
                            "{}: row {}: not a number: {f:?}",
                            path.display(),
                            line + 1
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((header, rows))
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn snapshot_header(nodes: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..nodes).map(|i| format!("u_{i}")));
    h.extend((0..nodes).map(|i| format!("a_{i}")));
    h
}

pub fn snapshot_row(t: f64, state: &FieldState) -> Vec<String> {
    std::iter::once(num(t))
        .chain(state.u.iter().chain(&state.a).map(|&x| num(x)))
        .collect()
}

/// Snapshot CSV: `t, u_0..u_{M-1}, a_0..a_{M-1}`.
pub fn write_snapshots(path: &Path, rows: &[(f64, FieldState)]) -> Result<()> {
    let nodes = rows.first().map_or(0, |r| r.1.nodes());
    write_csv(
        path,
        "snapshot",
        &snapshot_header(nodes),
        rows.iter().map(|(t, s)| snapshot_row(*t, s)),
    )
}

pub fn read_snapshots(path: &Path) -> Result<Vec<(f64, FieldState)>> {
    let (header, rows) = read_csv(path)?;
    if header.len() < 3 || header.len() % 2 == 0 || header[0] != "t" {
        return Err(Error::Parse(format!(
            "{}: not a snapshot file (header {header:?})",
            path.display()
        )));
    }
    let m = (header.len() - 1) / 2;
    rows.into_iter()
        .map(|r| {
            Ok((
                r[0],
                FieldState::new(r[1..=m].to_vec(), r[m + 1..].to_vec())?,
            ))
        })
        .collect()
}

/// Coarse time series: `t, peak_u, peak_a, V`.
pub fn write_v_series(path: &Path, rows: &[[f64; 4]]) -> Result<()> {
    write_csv(
        path,
        "v_series",
        &strings(&["t", "peak_u", "peak_a", "V"]),
        rows.iter().map(|r| r.iter().map(|&x| num(x)).collect()),
    )
}

pub fn write_drift_diffusion(path: &Path, curve: &DriftDiffusionCurve) -> Result<()> {
    write_csv(
        path,
        "drift_diffusion",
        &strings(&["v", "mu", "mu_se", "d", "d_se", "n"]),
        curve.points.iter().map(|p| {
            let e = &p.estimate;
            vec![
                num(p.v),
                num(e.mu),
                num(e.mu_se),
                num(e.d),
                num(e.d_se),
                e.n.to_string(),
            ]
        }),
    )
}

pub fn write_potentials(path: &Path, curves: &[&PotentialCurve]) -> Result<()> {
    write_csv(
        path,
        "potential",
        &strings(&["v", "beta_phi", "method"]),
        curves.iter().flat_map(|c| {
            c.v.iter()
                .zip(&c.g)
                .map(|(&v, &g)| vec![num(v), num(g), c.method.as_str().to_string()])
                .collect::<Vec<_>>()
        }),
    )
}

/// Branch CSV: `param, root, stability, slope, c0..c3, residual`.
pub fn write_branches(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let rows = points.iter().flat_map(|p| {
        let (c, residual) = match &p.cubic {
            Some(cub) => (cub.c, cub.residual),
            None => ([f64::NAN; 4], f64::NAN),
        };
        p.roots
            .iter()
            .map(move |b| {
                let mut r = vec![
                    num(b.param),
                    num(b.root),
                    b.stability.as_str().to_string(),
                    num(b.slope),
                ];
                r.extend(c.iter().map(|&x| num(x)));
                r.push(num(residual));
                r
            })
            .collect::<Vec<_>>()
    });
    write_csv(
        path,
        "branch",
        &strings(&[
            "param",
            "root",
            "stability",
            "slope",
            "c0",
            "c1",
            "c2",
            "c3",
            "residual",
        ]),
        rows,
    )
}

/// Potential extrema: `param, v, stability, slope` (stable = minimum).
pub fn write_extrema(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let row = |b: &BranchPoint| {
        vec![
            num(b.param),
            num(b.root),
            b.stability.as_str().to_string(),
            num(b.slope),
        ]
    };
    write_csv(
        path,
        "extrema",
        &strings(&["param", "v", "stability", "slope"]),
        points
            .iter()
            .flat_map(|p| p.extrema.iter().map(row).collect::<Vec<_>>()),
    )
}

/// Failed sweep points: `param, error`.
pub fn write_failures(path: &Path, params: &[(f64, String)]) -> Result<()> {
    write_csv(
        path,
        "failures",
        &strings(&["param", "error"]),
        params.iter().map(|(p, e)| vec![num(*p), e.clone()]),
    )
}

pub fn write_kramers(path: &Path, points: &[TauPoint]) -> Result<()> {
    let rows = points.iter().filter_map(|p| {
        let k = p.kramers.as_ref()?;
        Some(vec![
            num(p.param),
            num(k.tau()),
            num(k.delta_g()),
            num(k.d_bar()),
            num(k.v_min()),
            num(k.curvature_min()),
            num(k.curvature_barrier()),
        ])
    });
    write_csv(
        path,
        "kramers",
        &strings(&[
            "param",
            "tau_kramers",
            "delta_g",
            "d_bar",
            "v_min",
            "curvature_min",
            "curvature_barrier",
        ]),
        rows,
    )
}

pub fn write_waiting_times(path: &Path, rec: &SwitchRecord) -> Result<()> {
    write_csv(
        path,
        "waiting_times",
        &strings(&["index", "switch_time", "waiting"]),
        rec.waiting
            .iter()
            .enumerate()
            .map(|(i, w)| vec![i.to_string(), num(rec.switch_times[i + 1]), num(*w)]),
    )
}

/// `index, Phi2..Phi{k+1}, V`.
pub fn write_dmap_coordinates(path: &Path, model: &DiffusionMapModel) -> Result<()> {
    let mut header = vec!["index".to_string()];
    header.extend((2..=model.k + 1).map(|j| format!("Phi{j}")));
    header.push("V".into());
    write_csv(
        path,
        "dmap_coordinates",
        &header,
        (0..model.len()).map(|i| {
            let mut r = vec![i.to_string()];
            r.extend((1..=model.k).map(|j| num(model.phi[[i, j]])));
            r.push(num(model.v[i]));
            r
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelMeta {
    format: u32,
    sigma: f64,
    k: usize,
    alignment: Alignment,
    eigenvalues: Vec<f64>,
    degrees: Vec<f64>,
    reference_u: Vec<f64>,
    u_scales: Vec<f64>,
    a_scales: Vec<f64>,
    v: Vec<f64>,
}

fn matrix_rows(a: &Array2<f64>) -> impl Iterator<Item = Vec<String>> + '_ {
    a.rows()
        .into_iter()
        .map(|r| r.iter().map(|&x| num(x)).collect())
}

fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let (header, rows) = read_csv(path)?;
    let cols = header.len();
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.concat())
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Persists a model as `dataset.csv`, `psi.csv` and `model.json` in `dir`.
pub fn save_model(dir: &Path, model: &DiffusionMapModel) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let dim = model.dataset.ncols();
    write_csv(
        &dir.join("dataset.csv"),
        "dmap_dataset",
        &(0..dim).map(|j| format!("x_{j}")).collect::<Vec<_>>(),
        matrix_rows(&model.dataset),
    )?;
    write_csv(
        &dir.join("psi.csv"),
        "dmap_psi",
        &(1..=model.k + 1)
            .map(|j| format!("Psi{j}"))
            .collect::<Vec<_>>(),
        matrix_rows(&model.psi),
    )?;
    write_csv(
        &dir.join("phi.csv"),
        "dmap_phi",
        &(1..=model.k + 1)
            .map(|j| format!("Phi{j}"))
            .collect::<Vec<_>>(),
        matrix_rows(&model.phi),
    )?;
    let meta = ModelMeta {
        format: FORMAT_VERSION,
        sigma: model.sigma,
        k: model.k,
        alignment: model.alignment,
        eigenvalues: model.eigenvalues.clone(),
        degrees: model.degrees.clone(),
        reference_u: model.reference_u.clone(),
        u_scales: model.u_scales.clone(),
        a_scales: model.a_scales.clone(),
        v: model
            .v
            .iter()
            .map(|&x| if x.is_finite() { x } else { f64::MAX })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(dir.join("model.json"), text)?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<DiffusionMapModel> {
    let text = std::fs::read_to_string(dir.join("model.json"))?;
    let meta: ModelMeta =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("model.json: {e}")))?;
    if meta.format != FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "model.json: format {} unsupported",
            meta.format
        )));
    }
    let dataset = read_matrix(&dir.join("dataset.csv"))?;
    let psi = read_matrix(&dir.join("psi.csv"))?;
    let phi = read_matrix(&dir.join("phi.csv"))?;
    let n = dataset.nrows();
    if psi.nrows() != n
        || psi.ncols() != meta.k + 1
        || phi.dim() != psi.dim()
        || meta.degrees.len() != n
    {
        return Err(Error::Parse("dmap model files disagree in size".into()));
    }
    Ok(DiffusionMapModel {
        dataset,
        reference_u: meta.reference_u,
        alignment: meta.alignment,
        u_scales: meta.u_scales,
        a_scales: meta.a_scales,
        sigma: meta.sigma,
        degrees: meta.degrees,
        eigenvalues: meta.eigenvalues,
        psi,
        phi,
        k: meta.k,
        v: meta
            .v
            .into_iter()
            .map(|x| if x == f64::MAX { f64::NAN } else { x })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmap::SigmaPolicy;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn snapshot_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let mut rng = stream(1, &[]);
        let rows: Vec<(f64, FieldState)> = (0..3)
            .map(|k| {
                let u = (0..7).map(|_| rng.random::<f64>() - 0.5).collect();
                let a = (0..7).map(|_| rng.random::<f64>() * 1e-9).collect();
                (k as f64 * 0.1, FieldState::new(u, a).unwrap())
            })
            .collect();
        write_snapshots(&path, &rows).unwrap();
        assert_eq!(read_snapshots(&path).unwrap(), rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# bumpfield snapshot v1\nt,u_0,"));
    }

    #[test]
    fn model_round_trip_preserves_restriction() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = stream(2, &[]);
        let data = Array2::from_shape_fn((30, 4), |_| rng.random::<f64>());
        let model = DiffusionMapModel::from_points(data, SigmaPolicy::default(), 2, None).unwrap();
        save_model(dir.path(), &model).unwrap();
        let back = load_model(dir.path()).unwrap();
        assert_eq!(back.dataset, model.dataset);
        assert_eq!(back.psi, model.psi);
        assert_eq!(back.phi, model.phi);
        let x = [0.3, 0.5, 0.2, 0.9];
        assert_eq!(back.nystrom(&x).unwrap(), model.nystrom(&x).unwrap());
    }

    #[test]
    fn malformed_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t,u_0,a_0\n0,1,x\n").unwrap();
        assert!(matches!(read_snapshots(&path), Err(Error::Parse(_))));
        std::fs::write(&path, "x,y\n1,2\n").unwrap();
        assert!(matches!(read_snapshots(&path), Err(Error::Parse(_))));
    }

    #[test]
    fn row_width_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let r = write_csv(
            &dir.path().join("w.csv"),
            "x",
            &strings(&["a", "b"]),
            vec![vec!["1".to_string()]],
        );
        assert!(r.is_err());
    }
}
