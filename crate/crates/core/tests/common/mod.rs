#![allow(dead_code)]

use nfmp::diffcore::{RowGroups, Tape};
use nfmp::fields::{init_hypernet_params, init_mlp_params, EncodingSpec, HypernetSpec, MlpSpec, SceneField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const DEFORM_WEIGHT: f64 = 0.3;
pub const EMBED_WEIGHT: f64 = 0.05;

/// A randomly sized template/deformation field with grouped inputs,
/// targets and embeddings.
pub struct Composition {
    pub field: SceneField,
    pub z: Vec<f64>,
    pub counts: Vec<usize>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub progress: f64,
}

impl Composition {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.gen_range(1..=3);
        let out = rng.gen_range(1..=3);
        let k = rng.gen_range(1..=4);
        let hidden = rng.gen_range(2..=6);
        let layers = rng.gen_range(1..=2);
        let t_bands = rng.gen_range(0..=3);
        let d_bands = rng.gen_range(0..=2);
        let tspec = MlpSpec::uniform(EncodingSpec::full(m, t_bands).encoded_dim(), hidden, layers, out).unwrap();
        let target = MlpSpec::uniform(EncodingSpec::full(m, d_bands).encoded_dim(), hidden, layers, m).unwrap();
        let dspec = HypernetSpec::new(k, rng.gen_range(2..=5), rng.gen_range(1..=2), target).unwrap();
        let template = init_mlp_params(&tspec, &mut rng);
        let deformation = init_hypernet_params(&dspec, 0.5, &mut rng);
        let field = SceneField::new(m, tspec, t_bands, template, dspec, d_bands, deformation).unwrap();

        let counts: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(1..=4)).collect();
        let n: usize = counts.iter().sum();
        let z = (0..counts.len() * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = (0..n * out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let progress = rng.gen_range(0.0..=1.0);
        Self { field, z, counts, x, y, progress }
    }

    pub fn num_params(&self) -> usize {
        self.field.template.len() + self.field.deformation.len() + self.z.len()
    }

    pub fn params(&self) -> Vec<f64> {
        [&self.field.template[..], &self.field.deformation, &self.z].concat()
    }

    fn with_params(&self, theta: &[f64]) -> (SceneField, Vec<f64>) {
        let (nt, nd) = (self.field.template.len(), self.field.deformation.len());
        let mut f = self.field.clone();
        f.template = theta[..nt].to_vec();
        f.deformation = theta[nt..nt + nd].to_vec();
        (f, theta[nt + nd..].to_vec())
    }

    /// Loss evaluated point by point without the tape.
    pub fn direct_loss(&self, theta: &[f64]) -> f64 {
        let (f, z) = self.with_params(theta);
        let (m, out, k) = (f.coord_dim, f.out_dim(), f.embed_dim());
        let n = self.x.len() / m;
        let (mut fit, mut deform, mut row) = (0.0, 0.0, 0);
        for (g, &c) in self.counts.iter().enumerate() {
            for _ in 0..c {
                let s = f.scene_eval(&z[g * k..(g + 1) * k], &self.x[row * m..(row + 1) * m], self.progress).unwrap();
                fit += s.value.iter().zip(&self.y[row * out..]).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                deform += s.offset.iter().map(|d| d * d).sum::<f64>();
                row += 1;
            }
        }
        let embed = z.iter().map(|v| v * v).sum::<f64>();
        fit / (n * out) as f64 + DEFORM_WEIGHT * deform / (n * m) as f64 + EMBED_WEIGHT * embed / z.len() as f64
    }

    /// Loss and reverse-mode gradient through the batched tape.
    pub fn tape_loss_grad(&self) -> (f64, Vec<f64>) {
        let f = &self.field;
        let (m, out, k) = (f.coord_dim, f.out_dim(), f.embed_dim());
        let n = self.x.len() / m;
        let groups = RowGroups::from_counts(&self.counts);
        let mut tape = Tape::new();
        let leaves = f.leaves(&mut tape, true).unwrap();
        let z = tape.leaf(self.counts.len(), k, &self.z[..]).unwrap();
        let x = tape.constant(n, m, &self.x[..]).unwrap();
        let neg_y = tape.constant(n, out, self.y.iter().map(|v| -v).collect::<Vec<_>>()).unwrap();
        let o = f.apply(&mut tape, &leaves, z, x, &groups, self.progress).unwrap();
        let r = tape.add(o.value, neg_y).unwrap();
        let r2 = tape.square(r).unwrap();
        let fit = tape.mean(r2).unwrap();
        let d2 = tape.square(o.offset).unwrap();
        let d = tape.mean(d2).unwrap();
        let d = tape.scale(d, DEFORM_WEIGHT).unwrap();
        let z2 = tape.square(z).unwrap();
        let e = tape.mean(z2).unwrap();
        let e = tape.scale(e, EMBED_WEIGHT).unwrap();
        let s = tape.add(fit, d).unwrap();
        let total = tape.add(s, e).unwrap();

        let grads = tape.backward(total).unwrap();
        let mut g = Vec::with_capacity(self.num_params());
        let vars = leaves.template.iter().chain(leaves.deformation.iter().flatten()).chain(std::iter::once(&z));
        for &v in vars {
            let (r, c) = tape.shape(v);
            match grads.get(v) {
                Some(a) => g.extend_from_slice(a),
                None => g.extend(std::iter::repeat(0.0).take(r * c)),
            }
        }
        (tape.scalar_value(total), g)
    }

    pub fn central_difference(&self) -> Vec<f64> {
        let theta = self.params();
        let mut p = theta.clone();
        (0..theta.len())
            .map(|i| {
                p[i] = theta[i] + FD_STEP;
                let hi = self.direct_loss(&p);
                p[i] = theta[i] - FD_STEP;
                let lo = self.direct_loss(&p);
                p[i] = theta[i];
                (hi - lo) / (2.0 * FD_STEP)
            })
            .collect()
    }
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}
