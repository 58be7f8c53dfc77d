//! Versioned binary checkpoints holding the Gaussian field, the surface net
//! and the refraction setup. Round trips are bitwise lossless (f64 little
//! endian throughout).

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{ReadBytesExt, WriteBytesExt, LE};
use refrac_core::heightfield::Domain;
use refrac_core::{Gaussian, GaussianField, HeightFieldNet, RefractionConfig, Vec3};
use thiserror::Error;

const MAGIC: [u8; 4] = *b"RFGC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint not found: {0}")]
    Missing(String),
    #[error("checkpoint version {found} unsupported (this build reads {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug)]
pub struct Checkpoint {
    pub field: GaussianField,
    pub net: Option<HeightFieldNet>,
    pub refraction: RefractionConfig,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_u32::<LE>(CHECKPOINT_VERSION)?;
    w.write_f64::<LE>(ckpt.refraction.n1)?;
    w.write_f64::<LE>(ckpt.refraction.n2)?;

    match &ckpt.net {
        None => w.write_u8(0)?,
        Some(net) => {
            w.write_u8(1)?;
            for v in [
                net.domain.x_min,
                net.domain.x_max,
                net.domain.y_min,
                net.domain.y_max,
                net.z0,
                net.scale,
                net.slope,
            ] {
                w.write_f64::<LE>(v)?;
            }
            w.write_u32::<LE>(net.bands as u32)?;
            // Hidden layer widths (all layers except the final projection).
            let hidden: Vec<usize> = net.layers[..net.layers.len() - 1]
                .iter()
                .map(|l| l.out)
                .collect();
            w.write_u32::<LE>(hidden.len() as u32)?;
            for hsz in &hidden {
                w.write_u32::<LE>(*hsz as u32)?;
            }
            let params = net.params_flat();
            w.write_u64::<LE>(params.len() as u64)?;
            for p in &params {
                w.write_f64::<LE>(*p)?;
            }
        }
    }

    let f = &ckpt.field;
    for v in f.background {
        w.write_f64::<LE>(v)?;
    }
    w.write_u32::<LE>(f.sh_degree as u32)?;
    w.write_u64::<LE>(f.gaussians.len() as u64)?;
    for g in &f.gaussians {
        for v in [g.mu.x, g.mu.y, g.mu.z] {
            w.write_f64::<LE>(v)?;
        }
        for v in g.rotation {
            w.write_f64::<LE>(v)?;
        }
        for v in [g.log_scale.x, g.log_scale.y, g.log_scale.z] {
            w.write_f64::<LE>(v)?;
        }
        w.write_f64::<LE>(g.logit_opacity)?;
        for v in &g.sh {
            w.write_f64::<LE>(*v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let file = File::open(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            CheckpointError::Missing(path.display().to_string())
        } else {
            CheckpointError::Io(e)
        }
    })?;
    let mut r = BufReader::new(file);
    let corrupt = |what: &str| CheckpointError::Corrupt(what.to_string());

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| corrupt("truncated header"))?;
    if magic != MAGIC {
        return Err(corrupt("bad magic bytes"));
    }
    let version = r.read_u32::<LE>().map_err(|_| corrupt("truncated header"))?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let n1 = read_f64(&mut r)?;
    let n2 = read_f64(&mut r)?;
    if !(n1.is_finite() && n2.is_finite()) {
        return Err(corrupt("non-finite refraction indices"));
    }

    let has_net = r.read_u8().map_err(|_| corrupt("truncated net flag"))?;
    let net = match has_net {
        0 => None,
        1 => {
            let x_min = read_f64(&mut r)?;
            let x_max = read_f64(&mut r)?;
            let y_min = read_f64(&mut r)?;
            let y_max = read_f64(&mut r)?;
            let z0 = read_f64(&mut r)?;
            let scale = read_f64(&mut r)?;
            let slope = read_f64(&mut r)?;
            let bands = r.read_u32::<LE>().map_err(|_| corrupt("truncated net shape"))? as usize;
            let n_hidden = r.read_u32::<LE>().map_err(|_| corrupt("truncated net shape"))? as usize;
            if n_hidden == 0 || n_hidden > 64 {
                return Err(corrupt("implausible hidden layer count"));
            }
            let mut hidden = Vec::with_capacity(n_hidden);
            for _ in 0..n_hidden {
                hidden.push(r.read_u32::<LE>().map_err(|_| corrupt("truncated net shape"))? as usize);
            }
            let n_params = r.read_u64::<LE>().map_err(|_| corrupt("truncated net shape"))? as usize;
            if scale <= 0.0 {
                return Err(corrupt("non-positive net output scale"));
            }
            let mut net = HeightFieldNet::init_flat(
                Domain::new(x_min, x_max, y_min, y_max),
                z0,
                scale,
                &hidden,
                bands,
                0,
            );
            net.slope = slope;
            if net.param_count() != n_params {
                return Err(corrupt("parameter count does not match net shape"));
            }
            let mut params = vec![0.0; n_params];
            for p in &mut params {
                *p = read_f64(&mut r)?;
            }
            net.set_params_flat(&params);
            Some(net)
        }
        _ => return Err(corrupt("bad net flag")),
    };

    let mut background = [0.0; 3];
    for v in &mut background {
        *v = read_f64(&mut r)?;
    }
    let sh_degree = r.read_u32::<LE>().map_err(|_| corrupt("truncated field header"))? as usize;
    if sh_degree > 3 {
        return Err(corrupt("spherical harmonics degree out of range"));
    }
    let n = r.read_u64::<LE>().map_err(|_| corrupt("truncated field header"))? as usize;
    let coeffs3 = refrac_core::sh::coeff_count(sh_degree) * 3;
    let mut gaussians = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let mu = read_vec3(&mut r)?;
        let mut rotation = [0.0; 4];
        for v in &mut rotation {
            *v = read_f64(&mut r)?;
        }
        let log_scale = read_vec3(&mut r)?;
        let logit_opacity = read_f64(&mut r)?;
        let mut sh = vec![0.0; coeffs3];
        for v in &mut sh {
            *v = read_f64(&mut r)?;
        }
        gaussians.push(Gaussian {
            mu,
            rotation,
            log_scale,
            logit_opacity,
            sh,
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(CheckpointError::Io)? != 0 {
        return Err(corrupt("trailing bytes after payload"));
    }

    Ok(Checkpoint {
        field: GaussianField::new(gaussians, background, sh_degree),
        net,
        refraction: RefractionConfig { n1, n2 },
    })
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, CheckpointError> {
    r.read_f64::<LE>()
        .map_err(|_| CheckpointError::Corrupt("truncated payload".to_string()))
}

fn read_vec3<R: Read>(r: &mut R) -> Result<Vec3, CheckpointError> {
    Ok(Vec3::new(read_f64(r)?, read_f64(r)?, read_f64(r)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use refrac_core::bvh::Aabb;
    use refrac_core::rng::SplitMix64;

    fn sample_checkpoint() -> Checkpoint {
        let mut rng = SplitMix64::new(3);
        let field = GaussianField::random_init(
            17,
            Aabb {
                min: Vec3::new(-1.0, -1.0, -1.0),
                max: Vec3::new(1.0, 1.0, 0.0),
            },
            1,
            [0.1, 0.0, 0.2],
            9,
        );
        let mut net = HeightFieldNet::init_flat(Domain::centered(1.5), 0.4, 0.8, &[8, 8], 3, 4);
        let mut p = net.params_flat();
        for v in &mut p {
            *v += rng.normal() * 0.01;
        }
        net.set_params_flat(&p);
        Checkpoint {
            field,
            net: Some(net),
            refraction: RefractionConfig::default(),
        }
    }

    #[test]
    fn round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        let ckpt = sample_checkpoint();
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.refraction, ckpt.refraction);
        assert_eq!(back.field.gaussians.len(), ckpt.field.gaussians.len());
        for (a, b) in back.field.gaussians.iter().zip(&ckpt.field.gaussians) {
            assert_eq!(a.mu, b.mu);
            assert_eq!(a.rotation, b.rotation);
            assert_eq!(a.log_scale, b.log_scale);
            assert_eq!(a.logit_opacity, b.logit_opacity);
            assert_eq!(a.sh, b.sh);
        }
        let (na, nb) = (back.net.unwrap(), ckpt.net.unwrap());
        assert_eq!(na.params_flat(), nb.params_flat());
        assert_eq!(na.bands, nb.bands);
        assert_eq!(na.z0, nb.z0);
    }

    #[test]
    fn missing_file_distinct_error() {
        let err = load_checkpoint(Path::new("/no/such/file.ckpt")).unwrap_err();
        assert!(matches!(err, CheckpointError::Missing(_)));
    }

    #[test]
    fn version_mismatch_names_both() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        let ckpt = sample_checkpoint();
        save_checkpoint(&path, &ckpt).unwrap();
        // Bump the version field in place.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        match err {
            CheckpointError::Version { found, expected } => {
                assert_eq!(found, 9);
                assert_eq!(expected, CHECKPOINT_VERSION);
            }
            other => panic!("expected version error, got {other}"),
        }
    }

    #[test]
    fn truncation_is_corrupt_not_crash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        save_checkpoint(&path, &sample_checkpoint()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        for cut in [6, 20, bytes.len() / 2, bytes.len() - 3] {
            std::fs::write(&path, &bytes[..cut]).unwrap();
            let err = load_checkpoint(&path).unwrap_err();
            assert!(
                matches!(err, CheckpointError::Corrupt(_)),
                "cut {cut}: {err}"
            );
        }
    }

    #[test]
    fn trailing_garbage_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        save_checkpoint(&path, &sample_checkpoint()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0xAB);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path).unwrap_err(),
            CheckpointError::Corrupt(_)
        ));
    }
}
