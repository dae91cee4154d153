//! Little-endian binary field map.
//!
//! Layout: 8-byte magic, `u32` Nx Ny Nz, `f64` rve edge, `f64` strain label,
//! `u32` flags; then per point 25 `f64` (position, F row-major, P row-major,
//! quaternion scalar-first), a `u32` texture id and 4 bytes of padding.

use super::{MaterialPoint, RecordFlags, RveIoError, StrainStepDataset, UNIT_EXACT_TOL, UNIT_RENORM_TOL};
use crate::{Mat3, Quat, Vec3};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"GMAP0001";
pub const HEADER_LEN: usize = 40;
pub const RECORD_LEN: usize = 208;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RveIoError + '_ {
    move |source| RveIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads one strain step, validating every point.
pub fn read_step(path: &Path) -> Result<StrainStepDataset, RveIoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let file_len = file.metadata().map_err(io_err(path))?.len();
    let mut reader = BufReader::with_capacity(1 << 20, file);

    if file_len < HEADER_LEN as u64 {
        return Err(RveIoError::TruncatedPayload {
            expected: HEADER_LEN as u64,
            found: file_len,
        });
    }
    let mut header = [0u8; HEADER_LEN];
    reader.read_exact(&mut header).map_err(io_err(path))?;
    if &header[0..8] != MAGIC {
        return Err(RveIoError::MalformedHeader("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let grid_dims = [u32_at(8), u32_at(12), u32_at(16)];
    let rve_edge = f64_at(20);
    let strain_label = f64_at(28);
    let flags = u32_at(36);

    if grid_dims.iter().any(|&d| d == 0) {
        return Err(RveIoError::MalformedHeader(format!("zero grid dimension {grid_dims:?}")));
    }
    if !(rve_edge > 0.0 && rve_edge.is_finite()) {
        return Err(RveIoError::MalformedHeader(format!("rve edge {rve_edge} must be positive")));
    }
    if !strain_label.is_finite() {
        return Err(RveIoError::MalformedHeader("non-finite strain label".into()));
    }
    if flags & !RecordFlags::KNOWN != 0 {
        return Err(RveIoError::MalformedHeader(format!("unknown flag bits {flags:#x}")));
    }
    let n = grid_dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
        .ok_or_else(|| RveIoError::MalformedHeader("grid too large".into()))?;
    let expected = HEADER_LEN as u64 + n * RECORD_LEN as u64;
    if file_len < expected {
        return Err(RveIoError::TruncatedPayload {
            expected,
            found: file_len,
        });
    }
    if file_len > expected {
        return Err(RveIoError::MalformedHeader(format!(
            "{} trailing bytes after payload",
            file_len - expected
        )));
    }

    let n = n as usize;
    let mut points = Vec::with_capacity(n);
    let mut rec = [0u8; RECORD_LEN];
    for index in 0..n {
        reader.read_exact(&mut rec).map_err(io_err(path))?;
        points.push(decode_record(&rec, index)?);
    }
    Ok(StrainStepDataset {
        grid_dims,
        rve_edge,
        strain_label,
        flags: RecordFlags(flags),
        points,
    })
}

fn decode_record(rec: &[u8; RECORD_LEN], index: usize) -> Result<MaterialPoint, RveIoError> {
    let mut v = [0f64; 25];
    for (k, slot) in v.iter_mut().enumerate() {
        *slot = f64::from_le_bytes(rec[8 * k..8 * k + 8].try_into().unwrap());
    }
    let texture_id = u32::from_le_bytes(rec[200..204].try_into().unwrap());
    let position = Vec3::new(v[0], v[1], v[2]);
    let def_grad = Mat3::from_row_slice(&v[3..12]);
    let piola = Mat3::from_row_slice(&v[12..21]);
    let mut orientation = Quat::new(v[21], v[22], v[23], v[24]);

    let norm = orientation.norm();
    let drift = (norm - 1.0).abs();
    if !(drift <= UNIT_RENORM_TOL) {
        return Err(RveIoError::NonUnitQuaternion { index, norm });
    }
    if drift > UNIT_EXACT_TOL {
        orientation /= norm;
    }
    let det = def_grad.determinant();
    if !(det > 0.0) {
        return Err(RveIoError::NonPositiveJacobian { index, det });
    }
    Ok(MaterialPoint {
        position,
        def_grad,
        piola,
        orientation,
        texture_id,
    })
}

fn encode_record(p: &MaterialPoint, out: &mut [u8; RECORD_LEN]) {
    let mut v = [0f64; 25];
    v[0..3].copy_from_slice(p.position.as_slice());
    for r in 0..3 {
        for c in 0..3 {
            v[3 + 3 * r + c] = p.def_grad[(r, c)];
            v[12 + 3 * r + c] = p.piola[(r, c)];
        }
    }
    let q = &p.orientation;
    v[21] = q.w;
    v[22] = q.i;
    v[23] = q.j;
    v[24] = q.k;
    for (k, x) in v.iter().enumerate() {
        out[8 * k..8 * k + 8].copy_from_slice(&x.to_le_bytes());
    }
    out[200..204].copy_from_slice(&p.texture_id.to_le_bytes());
    out[204..208].fill(0);
}

/// Writes one strain step atomically: the data goes to a temporary file in
/// the target directory which is then renamed over `path`.
pub fn write_step(dataset: &StrainStepDataset, path: &Path) -> Result<(), RveIoError> {
    dataset.validate()?;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    {
        let mut w = BufWriter::with_capacity(1 << 20, tmp.as_file());
        let mut header = [0u8; HEADER_LEN];
        header[0..8].copy_from_slice(MAGIC);
        for (k, d) in dataset.grid_dims.iter().enumerate() {
            header[8 + 4 * k..12 + 4 * k].copy_from_slice(&d.to_le_bytes());
        }
        header[20..28].copy_from_slice(&dataset.rve_edge.to_le_bytes());
        header[28..36].copy_from_slice(&dataset.strain_label.to_le_bytes());
        header[36..40].copy_from_slice(&dataset.flags.0.to_le_bytes());
        w.write_all(&header).map_err(io_err(path))?;
        let mut rec = [0u8; RECORD_LEN];
        for p in &dataset.points {
            encode_record(p, &mut rec);
            w.write_all(&rec).map_err(io_err(path))?;
        }
        w.flush().map_err(io_err(path))?;
    }
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| RveIoError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rve_io::{generate_synthetic, SyntheticSpec};

    fn small() -> StrainStepDataset {
        let spec = SyntheticSpec::new([5, 4, 3], 3, 11);
        generate_synthetic(&spec).unwrap().dataset
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.gmap");
        let mut ds = small();
        ds.strain_label = 0.0125;
        write_step(&ds, &path).unwrap();
        let back = read_step(&path).unwrap();
        assert_eq!(back.grid_dims, ds.grid_dims);
        assert_eq!(back.rve_edge.to_bits(), ds.rve_edge.to_bits());
        for (a, b) in ds.points.iter().zip(&back.points) {
            assert_eq!(a, b);
        }
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(len as usize, HEADER_LEN + 60 * RECORD_LEN);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.gmap");
        write_step(&small(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 100]).unwrap();
        assert!(matches!(read_step(&path), Err(RveIoError::TruncatedPayload { .. })));
        std::fs::write(&path, &bytes[..20]).unwrap();
        assert!(matches!(read_step(&path), Err(RveIoError::TruncatedPayload { .. })));
    }

    #[test]
    fn bad_magic_and_flags_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.gmap");
        write_step(&small(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_step(&path), Err(RveIoError::MalformedHeader(_))));
        bytes[0] = b'G';
        bytes[36..40].copy_from_slice(&0x80u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_step(&path), Err(RveIoError::MalformedHeader(_))));
    }

    fn patch_point(bytes: &mut [u8], index: usize, field: usize, value: f64) {
        let o = HEADER_LEN + index * RECORD_LEN + 8 * field;
        bytes[o..o + 8].copy_from_slice(&value.to_le_bytes());
    }

    #[test]
    fn quaternion_drift_policy() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.gmap");
        write_step(&small(), &path).unwrap();
        let orig = std::fs::read(&path).unwrap();

        // small drift: renormalised on read
        let mut bytes = orig.clone();
        patch_point(&mut bytes, 3, 21, 1.0 + 5e-7);
        patch_point(&mut bytes, 3, 22, 0.0);
        patch_point(&mut bytes, 3, 23, 0.0);
        patch_point(&mut bytes, 3, 24, 0.0);
        std::fs::write(&path, &bytes).unwrap();
        let ds = read_step(&path).unwrap();
        assert!((ds.points[3].orientation.norm() - 1.0).abs() < 1e-15);

        // large drift: rejected with the point index
        patch_point(&mut bytes, 3, 21, 1.001);
        std::fs::write(&path, &bytes).unwrap();
        match read_step(&path) {
            Err(RveIoError::NonUnitQuaternion { index, .. }) => assert_eq!(index, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_positive_jacobian_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.gmap");
        write_step(&small(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // F11 = -1 flips the sign of det(F) for an identity gradient.
        patch_point(&mut bytes, 7, 3, -1.0);
        std::fs::write(&path, &bytes).unwrap();
        match read_step(&path) {
            Err(RveIoError::NonPositiveJacobian { index, det }) => {
                assert_eq!(index, 7);
                assert!(det < 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn failed_write_leaves_no_partial_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.gmap");
        let mut ds = small();
        ds.points[0].def_grad = Mat3::zeros();
        assert!(write_step(&ds, &path).is_err());
        assert!(!path.exists());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
