//! Trajectory binary format.
//!
//! ```text
//! magic        8 bytes  "SNLSTRJ1"
//! dim          u64 LE
//! points       u64 LE   (per axis)
//! snapshots    u64 LE
//! box_length   f64 LE
//! dt           f64 LE   (time between consecutive stored snapshots)
//! scheme       u8       (0 direct, 1 dpd, 2 deterministic_gp, 3 deterministic_cubic)
//! v            snapshots × points^dim × (re, im) f64 LE
//! psi          same layout, present only for dpd
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{Frame, Scheme, SolverConfig, Trajectory};
use crate::error::{Error, Result};
use crate::lattice::{make_grid, ComplexField};
use crate::noise::{invalid, read_complex, read_f64, read_u64, write_complex, NoiseSpec};

const TRAJECTORY_MAGIC: &[u8; 8] = b"SNLSTRJ1";

impl Trajectory {
    /// Time between consecutive stored snapshots.
    pub fn snapshot_interval(&self) -> f64 {
        self.config.dt * self.config.snapshot_stride as f64
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let grid = self.grid();
        w.write_all(TRAJECTORY_MAGIC)?;
        w.write_all(&(grid.dim() as u64).to_le_bytes())?;
        w.write_all(&(grid.points_per_axis() as u64).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&grid.box_length().to_le_bytes())?;
        w.write_all(&self.snapshot_interval().to_le_bytes())?;
        w.write_all(&[self.config.scheme.tag()])?;
        for v in &self.v_snapshots {
            write_complex(&mut w, v.values())?;
        }
        if self.config.scheme == Scheme::Dpd {
            for p in &self.psi_snapshots {
                write_complex(&mut w, p.values())?;
            }
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    /// Reads a stored trajectory. The noise path is not part of the format,
    /// so the result carries none; its config has stride 1 and `dt` equal
    /// to the stored snapshot interval.
    pub fn read_from(mut r: impl Read) -> std::io::Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != TRAJECTORY_MAGIC {
            return Err(invalid("bad trajectory magic"));
        }
        let dim = read_u64(&mut r)? as usize;
        let n = read_u64(&mut r)? as usize;
        let count = read_u64(&mut r)? as usize;
        let box_length = read_f64(&mut r)?;
        let dt = read_f64(&mut r)?;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let scheme = Scheme::from_tag(tag[0]).ok_or_else(|| invalid("unknown scheme tag"))?;
        if count < 1 {
            return Err(invalid("trajectory holds no snapshots"));
        }
        let grid = make_grid(dim, n, box_length).map_err(|e| invalid(&e.to_string()))?;
        let mut read_block = || -> std::io::Result<Vec<ComplexField>> {
            (0..count)
                .map(|_| {
                    let values = read_complex(&mut r, grid.total_points())?;
                    ComplexField::new(&grid, values).map_err(|e| invalid(&e.to_string()))
                })
                .collect()
        };
        let v_snapshots = read_block()?;
        let psi_snapshots = if scheme == Scheme::Dpd {
            read_block()?
        } else {
            vec![ComplexField::zeros(&grid); count]
        };
        let t_final = dt * (count - 1) as f64;
        let config = SolverConfig {
            grid: grid.clone(),
            t_final,
            dt,
            scheme,
            noise: NoiseSpec::zero(&grid),
            initial_v: v_snapshots[0].clone(),
            snapshot_stride: 1,
            seed: 0,
            stream_id: 0,
            nonlinear: true,
        };
        Ok(Trajectory {
            config,
            times: (0..count).map(|i| i as f64 * dt).collect(),
            v_snapshots,
            psi_snapshots,
            noise_path: None,
            frame: Frame::GrossPitaevskii,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file)).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{solve, InitialData};
    use crate::lattice::make_grid;

    #[test]
    fn round_trip_dpd() {
        let g = make_grid(2, 8, 3.0).unwrap();
        let v0 = InitialData::GaussianBump { amplitude: 0.3, width: 0.5 }.build(&g).unwrap();
        let noise = NoiseSpec::multiplier(&g, 0.1, 3.0, None).unwrap();
        let cfg = SolverConfig::new(&g, Scheme::Dpd, v0, 0.01, 0.04)
            .with_noise(noise)
            .with_stride(2);
        let tr = solve(&cfg).unwrap();
        let mut buf = Vec::new();
        tr.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"SNLSTRJ1");
        assert_eq!(buf[48], 1);
        assert_eq!(buf.len(), 49 + 2 * 3 * 64 * 16);
        let back = Trajectory::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.v_snapshots, tr.v_snapshots);
        assert_eq!(back.psi_snapshots, tr.psi_snapshots);
        assert_eq!(back.times.len(), 3);
        assert!((back.times[2] - 0.04).abs() < 1e-15);
        assert!(Trajectory::read_from(&buf[..40]).is_err());
    }
}
