//! Coupling matrices and their dreaming-time flow.
//!
//! The unified construction is `J(t) = (1/D_N) X^T [(1+t)/(1 + t C)] X` with
//! `C = (1/D_N) X X^T`, where `X` stacks the stored information vectors (raw
//! patterns, per-class empirical means, or all examples) and `D_N` is `N` or
//! `N M` depending on the setting. The resolvent is never inverted directly:
//! we eigendecompose whichever Gram matrix is smaller (`C` when the number of
//! stored rows is at most `N`, the `N x N` Hebbian matrix otherwise — the two
//! share their nonzero spectrum) and rebuild
//! `J(t) = sum_k map(c_k, t) e_k e_k^T` from the orthonormal modes.
//!
//! Eigenvalues flow through `map(l, t) = (1+t) l / (1 + t l)` while
//! eigenvectors stay fixed, so one factorization serves every `t`, including
//! the projector limit `t = +inf` (spectral replacement `l > tol -> 1`).

use crate::data::{ExampleSet, GroundTruthSet};
use crate::error::{Error, Result};
use crate::setting::{ModelSetting, SettingKind};
use faer::{Mat, Scale, Side};

/// Eigenvalues below this count as exact zeros in the projector limit.
pub const PROJECTOR_TOL: f64 = 1e-10;

/// Dreaming flow of a single eigenvalue: `(1+t) l0 / (1 + t l0)`.
///
/// Fixes 0 and 1 for every `t`, is monotone increasing in `l0`, and is the
/// identity at `t = 0`. `t = +inf` applies the spectral replacement
/// `l0 > PROJECTOR_TOL -> 1` (else 0).
pub fn eigen_map(lambda0: f64, t: f64) -> f64 {
    if t.is_infinite() {
        return if lambda0 > PROJECTOR_TOL { 1.0 } else { 0.0 };
    }
    (1.0 + t) * lambda0 / (1.0 + t * lambda0)
}

/// Inverse flow: `l0 = l / (1 + t (1 - l))`.
///
/// Defined for `1 + t(1-l) > 0`, i.e. below the projector limit.
pub fn eigen_map_inverse(lambda: f64, t: f64) -> Result<f64> {
    if t.is_infinite() {
        return Err(Error::ParameterDomain {
            name: "t",
            value: t,
            domain: "finite t (the projector limit is not invertible)",
        });
    }
    let denom = 1.0 + t * (1.0 - lambda);
    if denom <= 0.0 {
        return Err(Error::ParameterDomain {
            name: "lambda",
            value: lambda,
            domain: "1 + t(1 - lambda) > 0",
        });
    }
    Ok(lambda / denom)
}

/// The stacked information vectors `X` with their normalization `D_N`.
#[derive(Debug, Clone)]
pub struct InformationMatrix {
    x: Mat<f64>,
    d_n: f64,
    setting: ModelSetting,
}

/// What the information matrix is built from.
#[derive(Debug, Clone, Copy)]
pub enum DataSource<'a> {
    /// Raw patterns (basic storing).
    Patterns(&'a GroundTruthSet),
    /// Noisy examples (supervised: per-class means; unsupervised: all rows).
    Examples(&'a ExampleSet),
}

impl InformationMatrix {
    /// Assemble from a prebuilt row matrix (streamed builders, dump reader).
    /// Entries must stay within `[-1, 1]`.
    pub fn from_parts(x: Mat<f64>, d_n: f64, setting: ModelSetting) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::ShapeMismatch("empty information matrix".into()));
        }
        if !(d_n > 0.0) {
            return Err(Error::ParameterDomain {
                name: "d_n",
                value: d_n,
                domain: "> 0",
            });
        }
        let bound = x.norm_max();
        if bound > 1.0 + 1e-12 {
            return Err(Error::ShapeMismatch(format!(
                "information entries must lie in [-1,1], got max |x| = {bound}"
            )));
        }
        Ok(Self { x, d_n, setting })
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn num_neurons(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> faer::MatRef<'_, f64> {
        self.x.as_ref()
    }

    pub fn d_n(&self) -> f64 {
        self.d_n
    }

    pub fn setting(&self) -> &ModelSetting {
        &self.setting
    }

    /// The Gram matrix `C = (1/D_N) X X^T` appearing in the resolvent.
    /// Beware: `K x K` with `K = P M` rows in the unsupervised setting.
    pub fn correlation(&self) -> Mat<f64> {
        let c = self.x.as_ref() * self.x.transpose();
        symmetrize(Scale(1.0 / self.d_n) * c)
    }
}

/// Assemble `X` and `D_N` for a setting.
///
/// * basic storing: `X_{mu i} = xi^mu_i` (`P x N`), `D_N = N`;
/// * supervised: `X_{mu i} = (1/M) sum_A chi^{mu,A}_i zeta^mu_i` (`P x N`),
///   `D_N = N`;
/// * unsupervised: `X_{(mu A) i} = chi^{mu,A}_i zeta^mu_i` (`P M x N`),
///   `D_N = N M`.
pub fn build_information_matrix(
    data: DataSource<'_>,
    kind: SettingKind,
) -> Result<InformationMatrix> {
    match (data, kind) {
        (DataSource::Patterns(gt), SettingKind::BasicStoring) => {
            let (p, n) = (gt.num_patterns(), gt.num_neurons());
            let x = Mat::from_fn(p, n, |mu, i| gt.pattern(mu)[i] as f64);
            Ok(InformationMatrix {
                x,
                d_n: n as f64,
                setting: ModelSetting::storing(p as f64 / n as f64)?,
            })
        }
        (DataSource::Examples(ex), SettingKind::Supervised) => {
            let (p, m, n) = (ex.num_classes(), ex.per_class(), ex.num_neurons());
            let mut x = Mat::<f64>::zeros(p, n);
            for mu in 0..p {
                for a in 0..m {
                    let row = ex.example(mu, a);
                    for i in 0..n {
                        x[(mu, i)] += row[i] as f64;
                    }
                }
            }
            let x = Scale(1.0 / m as f64) * x;
            Ok(InformationMatrix {
                x,
                d_n: n as f64,
                setting: ModelSetting::supervised(p as f64 / n as f64, ex.quality(), m)?,
            })
        }
        (DataSource::Examples(ex), SettingKind::Unsupervised) => {
            let (p, m, n) = (ex.num_classes(), ex.per_class(), ex.num_neurons());
            let x = Mat::from_fn(p * m, n, |row, i| ex.example(row / m, row % m)[i] as f64);
            Ok(InformationMatrix {
                x,
                d_n: (n * m) as f64,
                setting: ModelSetting::unsupervised(p as f64 / n as f64, ex.quality(), m)?,
            })
        }
        (DataSource::Patterns(_), kind) => Err(Error::ShapeMismatch(format!(
            "setting `{kind}` needs an example set, got raw patterns"
        ))),
        (DataSource::Examples(_), kind) => Err(Error::ShapeMismatch(format!(
            "setting `{kind}` stores raw patterns, got an example set"
        ))),
    }
}

/// Dense symmetric coupling matrix tagged with its dreaming time.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    j: Mat<f64>,
    t: f64,
    setting: ModelSetting,
}

impl CouplingMatrix {
    /// Wrap an existing matrix; enforces exact symmetry by averaging the
    /// off-diagonal pairs (rejecting anything asymmetric beyond roundoff).
    pub fn from_matrix(j: Mat<f64>, t: f64, setting: ModelSetting) -> Result<Self> {
        if j.nrows() != j.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "coupling matrix must be square, got {}x{}",
                j.nrows(),
                j.ncols()
            )));
        }
        check_time(t)?;
        let scale = j.norm_max().max(1.0);
        let asym = (&j - j.transpose()).norm_max();
        if asym > 1e-8 * scale {
            return Err(Error::ShapeMismatch(format!(
                "coupling matrix asymmetry {asym:.3e} exceeds roundoff"
            )));
        }
        Ok(Self {
            j: symmetrize(j),
            t,
            setting,
        })
    }

    pub fn num_neurons(&self) -> usize {
        self.j.nrows()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn setting(&self) -> &ModelSetting {
        &self.setting
    }

    pub fn matrix(&self) -> faer::MatRef<'_, f64> {
        self.j.as_ref()
    }

    /// Local field `h = J sigma`.
    pub fn apply_spins(&self, spins: &[i8]) -> Vec<f64> {
        assert_eq!(spins.len(), self.num_neurons(), "config/coupling mismatch");
        let v = faer::Col::from_fn(spins.len(), |i| spins[i] as f64);
        let h = self.j.as_ref() * v;
        h.iter().copied().collect()
    }

    /// `(1/N) ||A - B||_F^2`, the per-neuron squared error between couplings.
    pub fn squared_error_to(&self, other: &CouplingMatrix) -> f64 {
        assert_eq!(self.num_neurons(), other.num_neurons());
        let d = &self.j - &other.j;
        let f = d.norm_l2();
        f * f / self.num_neurons() as f64
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::ParameterDomain {
            name: "t",
            value: t,
            domain: "[0, +inf]",
        });
    }
    Ok(())
}

fn symmetrize(m: Mat<f64>) -> Mat<f64> {
    let mt = m.transpose().to_owned();
    Scale(0.5) * (m + mt)
}

/// Eigen-factored coupling: one factorization serves every dreaming time.
///
/// Holds an orthonormal basis of the positive modes together with their
/// `t = 0` eigenvalues; zero modes are left implicit. Dense matrices,
/// matrix-free applications and spectra at any `t` all derive from it.
#[derive(Debug, Clone)]
pub struct SpectralCoupling {
    basis: Mat<f64>,  // N x K, orthonormal columns
    evals0: Vec<f64>, // K eigenvalues of J(0), >= 0
    n: usize,
    setting: ModelSetting,
}

impl SpectralCoupling {
    /// Factor from an information matrix, eigendecomposing the smaller Gram.
    pub fn from_information(info: &InformationMatrix) -> Result<Self> {
        let (k_rows, n) = (info.rows(), info.num_neurons());
        if k_rows <= n {
            let c = info.correlation();
            let (evals, evecs) = sym_eigen(&c)?;
            // e_k = X^T v_k / sqrt(c_k D) is orthonormal; modes with c_k at
            // numerical zero belong to the null space and are dropped.
            let cmax = evals.last().copied().unwrap_or(0.0).max(0.0);
            let keep: Vec<usize> = (0..evals.len())
                .filter(|&i| evals[i] > 1e-12 * cmax.max(1e-300))
                .collect();
            let mut scaled = Mat::zeros(k_rows, keep.len());
            for (j, &idx) in keep.iter().enumerate() {
                let s = 1.0 / (evals[idx] * info.d_n()).sqrt();
                for i in 0..k_rows {
                    scaled[(i, j)] = evecs[(i, idx)] * s;
                }
            }
            let basis = info.x().transpose() * scaled;
            let evals0 = keep.iter().map(|&i| evals[i]).collect();
            Ok(Self {
                basis,
                evals0,
                n,
                setting: *info.setting(),
            })
        } else {
            let g = hebbian(info);
            Self::from_gram(g, *info.setting())
        }
    }

    /// Factor a precomputed `N x N` Hebbian matrix `J(0)`; this is the path
    /// for unsupervised runs too large to materialize `X` at once.
    pub fn from_gram(gram: Mat<f64>, setting: ModelSetting) -> Result<Self> {
        let n = gram.nrows();
        if gram.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "gram matrix must be square, got {}x{}",
                n,
                gram.ncols()
            )));
        }
        let (evals, evecs) = sym_eigen(&gram)?;
        let evals0 = evals.iter().map(|&l| l.max(0.0)).collect();
        Ok(Self {
            basis: evecs,
            evals0,
            n,
            setting,
        })
    }

    pub fn num_neurons(&self) -> usize {
        self.n
    }

    pub fn setting(&self) -> &ModelSetting {
        &self.setting
    }

    /// Dense `J(t) = sum_k map(c_k, t) e_k e_k^T`.
    pub fn coupling_at(&self, t: f64) -> Result<CouplingMatrix> {
        check_time(t)?;
        let k = self.evals0.len();
        let mut w = Mat::zeros(self.n, k);
        for j in 0..k {
            let s = eigen_map(self.evals0[j], t).max(0.0).sqrt();
            for i in 0..self.n {
                w[(i, j)] = self.basis[(i, j)] * s;
            }
        }
        let j = symmetrize(&w * w.transpose());
        Ok(CouplingMatrix {
            j,
            t,
            setting: self.setting,
        })
    }

    /// Matrix-free local field `J(t) sigma` in `O(N K)`.
    pub fn apply_spins_at(&self, t: f64, spins: &[i8]) -> Vec<f64> {
        assert_eq!(spins.len(), self.n, "config/coupling mismatch");
        let v = faer::Col::from_fn(self.n, |i| spins[i] as f64);
        let mut proj = self.basis.transpose() * v;
        for (x, &l0) in proj.iter_mut().zip(&self.evals0) {
            *x *= eigen_map(l0, t);
        }
        let h = self.basis.as_ref() * proj;
        h.iter().copied().collect()
    }

    /// Full spectrum of `J(t)` (zero modes included), ascending.
    pub fn eigenvalues_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n - self.evals0.len()];
        out.extend(self.evals0.iter().map(|&l| eigen_map(l, t)));
        out.sort_by(f64::total_cmp);
        out
    }
}

/// Hebbian matrix `J(0) = (1/D_N) X^T X`, exactly symmetric.
fn hebbian(info: &InformationMatrix) -> Mat<f64> {
    let g = info.x().transpose() * info.x();
    symmetrize(Scale(1.0 / info.d_n()) * g)
}

/// Build `J(t)` from the information matrix.
///
/// `t = 0` short-circuits to the Hebbian product; every other time goes
/// through the spectral factorization. `t = +inf` yields the projector.
pub fn build_coupling(info: &InformationMatrix, t: f64) -> Result<CouplingMatrix> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(CouplingMatrix {
            j: hebbian(info),
            t,
            setting: *info.setting(),
        });
    }
    SpectralCoupling::from_information(info)?.coupling_at(t)
}

/// Ascending eigenvalues of a coupling matrix.
pub fn spectrum(j: &CouplingMatrix) -> Result<Vec<f64>> {
    let (evals, _) = sym_eigen(&j.j)?;
    Ok(evals)
}

/// Ascending eigenvalues with matching eigenvector columns.
pub fn spectrum_with_vectors(j: &CouplingMatrix) -> Result<(Vec<f64>, Mat<f64>)> {
    sym_eigen(&j.j)
}

fn sym_eigen(m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let eig = m.self_adjoint_eigen(Side::Lower).map_err(|_| {
        let dump = dump_matrix_for_debug(m);
        Error::Eigensolver {
            n: m.nrows(),
            norm: m.norm_l2(),
            dump,
        }
    })?;
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    let s = eig.S();
    idx.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let evals: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
    let u = eig.U();
    let evecs = Mat::from_fn(m.nrows(), m.nrows(), |i, j| u[(i, idx[j])]);
    Ok((evals, evecs))
}

/// Best-effort raw dump of a matrix that broke the eigensolver.
fn dump_matrix_for_debug(m: &Mat<f64>) -> String {
    let path = std::env::temp_dir().join(format!(
        "coupling-eigen-failure-{}x{}-{}.f64",
        m.nrows(),
        m.ncols(),
        std::process::id()
    ));
    let mut bytes = Vec::with_capacity(8 * m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            bytes.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    match std::fs::write(&path, bytes) {
        Ok(()) => format!("; matrix dumped to {}", path.display()),
        Err(_) => String::from("; matrix dump failed"),
    }
}

/// Integrate `dJ/dt = (J - J^2)/(1+t)` with fixed-step RK4 from `t = 0`.
///
/// Exists as an independent cross-check of the closed-form flow; accuracy is
/// `O(steps^-4)`.
pub fn integrate_dreaming_ode(
    j0: &CouplingMatrix,
    t_final: f64,
    steps: usize,
) -> Result<CouplingMatrix> {
    if j0.t() != 0.0 {
        return Err(Error::ParameterDomain {
            name: "j0.t",
            value: j0.t(),
            domain: "ODE integration starts from t = 0",
        });
    }
    if !t_final.is_finite() || t_final < 0.0 {
        return Err(Error::ParameterDomain {
            name: "t_final",
            value: t_final,
            domain: "[0, inf)",
        });
    }
    if steps == 0 {
        return Err(Error::ParameterDomain {
            name: "steps",
            value: 0.0,
            domain: ">= 1",
        });
    }
    if t_final == 0.0 {
        return Ok(j0.clone());
    }
    let h = t_final / steps as f64;
    let flow = |t: f64, y: &Mat<f64>| -> Mat<f64> {
        let y2 = y * y;
        Scale(1.0 / (1.0 + t)) * (y - y2)
    };
    let mut y = j0.j.clone();
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = flow(t, &y);
        let k2 = flow(t + 0.5 * h, &(&y + Scale(0.5 * h) * &k1));
        let k3 = flow(t + 0.5 * h, &(&y + Scale(0.5 * h) * &k2));
        let k4 = flow(t + h, &(&y + Scale(h) * &k3));
        y = &y + Scale(h / 6.0) * (k1 + Scale(2.0) * k2 + Scale(2.0) * k3 + k4);
    }
    Ok(CouplingMatrix {
        j: symmetrize(y),
        t: t_final,
        setting: j0.setting,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_examples, make_ground_truths, GroundTruthSet};
    use crate::rng::RngSpec;
    use approx::assert_abs_diff_eq;
    use faer::linalg::solvers::DenseSolveCore;

    fn spec() -> RngSpec {
        RngSpec::new(7, 0)
    }

    fn storing_info(n: usize, p: usize, seed: u64) -> InformationMatrix {
        let gt = make_ground_truths(n, p, &RngSpec::new(seed, 0)).unwrap();
        build_information_matrix(DataSource::Patterns(&gt), SettingKind::BasicStoring).unwrap()
    }

    #[test]
    fn eigen_map_fixed_points_and_values() {
        for t in [0.0, 0.5, 1.0, 10.0, 1e6, f64::INFINITY] {
            assert_eq!(eigen_map(0.0, t), 0.0);
            assert_eq!(eigen_map(1.0, t), 1.0);
        }
        assert_abs_diff_eq!(eigen_map(2.0, 1.0), 4.0 / 3.0, epsilon = 1e-15);
        assert_eq!(eigen_map(0.5, f64::INFINITY), 1.0);
        assert_eq!(eigen_map(1e-12, f64::INFINITY), 0.0);
    }

    #[test]
    fn eigen_map_inverse_examples() {
        assert_abs_diff_eq!(eigen_map_inverse(1.0, 5.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            eigen_map_inverse(4.0 / 3.0, 1.0).unwrap(),
            2.0,
            epsilon = 1e-14
        );
        // Beyond the projector limit the denominator flips sign.
        assert!(eigen_map_inverse(1.2, 10.0).is_err());
        assert!(eigen_map_inverse(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn hadamard_patterns_give_identity_correlation() {
        let rows: Vec<i8> = vec![
            1, 1, 1, 1, //
            1, -1, 1, -1, //
            1, 1, -1, -1, //
            1, -1, -1, 1,
        ];
        let gt = GroundTruthSet::from_raw(rows, 4, 4).unwrap();
        let info =
            build_information_matrix(DataSource::Patterns(&gt), SettingKind::BasicStoring)
                .unwrap();
        let c = info.correlation();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(c[(i, j)], expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn supervised_means_at_r1_equal_patterns() {
        let gt = make_ground_truths(12, 3, &spec()).unwrap();
        let ex = make_examples(&gt, 5, 1.0, &spec()).unwrap();
        let info =
            build_information_matrix(DataSource::Examples(&ex), SettingKind::Supervised).unwrap();
        for mu in 0..3 {
            for i in 0..12 {
                assert_abs_diff_eq!(
                    info.x()[(mu, i)],
                    gt.pattern(mu)[i] as f64,
                    epsilon = 1e-15
                );
            }
        }
        assert_eq!(info.d_n(), 12.0);
    }

    #[test]
    fn unsupervised_correlation_matches_double_sum() {
        let (n, p, m) = (6, 2, 3);
        let gt = make_ground_truths(n, p, &spec()).unwrap();
        let ex = make_examples(&gt, m, 0.7, &spec()).unwrap();
        let info =
            build_information_matrix(DataSource::Examples(&ex), SettingKind::Unsupervised)
                .unwrap();
        assert_eq!(info.rows(), p * m);
        assert_eq!(info.d_n(), (n * m) as f64);
        let c = info.correlation();
        for row_a in 0..p * m {
            for row_b in 0..p * m {
                let ea = ex.example(row_a / m, row_a % m);
                let eb = ex.example(row_b / m, row_b % m);
                let dot: i64 = ea.iter().zip(eb).map(|(&x, &y)| (x as i64) * (y as i64)).sum();
                let expect = dot as f64 / (n * m) as f64;
                assert_abs_diff_eq!(c[(row_a, row_b)], expect, epsilon = 1e-13);
            }
        }
        // Unit information rows: diagonal is exactly N/(N M) = 1/M.
        assert_abs_diff_eq!(c[(0, 0)], 1.0 / m as f64, epsilon = 1e-14);
    }

    #[test]
    fn mismatched_source_and_setting_fail() {
        let gt = make_ground_truths(8, 2, &spec()).unwrap();
        let ex = make_examples(&gt, 3, 0.5, &spec()).unwrap();
        assert!(
            build_information_matrix(DataSource::Patterns(&gt), SettingKind::Supervised).is_err()
        );
        assert!(build_information_matrix(
            DataSource::Examples(&ex),
            SettingKind::BasicStoring
        )
        .is_err());
    }

    #[test]
    fn coupling_matches_bruteforce_resolvent() {
        // Dense (1 + tC)^{-1} oracle, independent of the spectral route.
        let info = storing_info(50, 10, 3);
        let t = 1.0;
        let j = build_coupling(&info, t).unwrap();
        let c = info.correlation();
        let k = info.rows();
        let mut a = Mat::<f64>::identity(k, k);
        for i in 0..k {
            for l in 0..k {
                a[(i, l)] += t * c[(i, l)];
            }
        }
        let inv = a.full_piv_lu().inverse();
        let brute = Scale((1.0 + t) / info.d_n())
            * (info.x().transpose() * (inv * info.x()));
        let diff = (&brute - j.matrix()).norm_max();
        assert!(diff < 1e-12, "max deviation {diff}");
    }

    #[test]
    fn hebbian_limit_and_projector_limit() {
        let info = storing_info(60, 12, 5);
        let j0 = build_coupling(&info, 0.0).unwrap();
        // t = 0 is the plain scaled Gram product.
        let direct = Scale(1.0 / info.d_n()) * (info.x().transpose() * info.x());
        assert!((j0.matrix() - &direct).norm_max() < 1e-14);

        // Large finite t: stored patterns are near-fixed points of J.
        let j_large = build_coupling(&info, 1e6).unwrap();
        let gt = make_ground_truths(60, 12, &RngSpec::new(5, 0)).unwrap();
        for mu in 0..12 {
            let h = j_large.apply_spins(gt.pattern(mu));
            for (hi, &xi) in h.iter().zip(gt.pattern(mu)) {
                assert!((hi - xi as f64).abs() < 1e-4, "field {hi} vs {xi}");
            }
        }
        // Exact projector at t = +inf.
        let j_inf = build_coupling(&info, f64::INFINITY).unwrap();
        for mu in 0..12 {
            let h = j_inf.apply_spins(gt.pattern(mu));
            for (hi, &xi) in h.iter().zip(gt.pattern(mu)) {
                assert!((hi - xi as f64).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn spectrum_of_identity_is_all_ones() {
        let j = CouplingMatrix::from_matrix(
            Mat::identity(5, 5),
            0.0,
            ModelSetting::storing(0.5).unwrap(),
        )
        .unwrap();
        let evals = spectrum(&j).unwrap();
        for l in evals {
            assert_abs_diff_eq!(l, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_eigenvalue_degeneracy_is_n_minus_p() {
        let info = storing_info(200, 50, 11);
        for t in [0.0, 2.0] {
            let j = build_coupling(&info, t).unwrap();
            let evals = spectrum(&j).unwrap();
            let zeros = evals.iter().filter(|l| l.abs() < 1e-10).count();
            assert_eq!(zeros, 150, "t={t}");
        }
    }

    #[test]
    fn coupling_is_symmetric_and_psd() {
        let info = storing_info(80, 20, 13);
        for t in [0.0, 0.7, 31.0] {
            let j = build_coupling(&info, t).unwrap();
            assert_eq!((j.matrix() - j.matrix().transpose()).norm_max(), 0.0);
            let evals = spectrum(&j).unwrap();
            assert!(evals[0] > -1e-10, "min eigenvalue {}", evals[0]);
            // Flow keeps eigenvalues in [0, map(lmax0)].
            let top0 = spectrum(&build_coupling(&info, 0.0).unwrap())
                .unwrap()
                .last()
                .copied()
                .unwrap();
            assert!(*evals.last().unwrap() <= eigen_map(top0, t) + 1e-9);
        }
    }

    #[test]
    fn spectrum_flows_through_eigen_map() {
        let info = storing_info(90, 18, 17);
        let e0 = spectrum(&build_coupling(&info, 0.0).unwrap()).unwrap();
        for t in [0.4, 3.0] {
            let et = spectrum(&build_coupling(&info, t).unwrap()).unwrap();
            // The map is monotone, so sorted order pairs eigenvalues.
            let max_err = e0
                .iter()
                .zip(&et)
                .map(|(&l0, &lt)| (eigen_map(l0, t) - lt).abs())
                .fold(0.0f64, f64::max);
            assert!(max_err < 1e-8, "t={t}: max err {max_err}");
        }
    }

    #[test]
    fn eigenvectors_are_stable_under_the_flow() {
        let info = storing_info(60, 12, 19);
        let (e0, v0) = spectrum_with_vectors(&build_coupling(&info, 0.0).unwrap()).unwrap();
        let (_, vt) = spectrum_with_vectors(&build_coupling(&info, 5.0).unwrap()).unwrap();
        let n = 60;
        for k in 0..n {
            if e0[k] < 1e-8 {
                continue; // degenerate null space may rotate freely
            }
            let dot: f64 = (0..n).map(|i| v0[(i, k)] * vt[(i, k)]).sum();
            assert!(dot.abs() > 1.0 - 1e-8, "mode {k}: |<v0,vt>| = {}", dot.abs());
        }
    }

    #[test]
    fn spectral_factorization_agrees_with_dense_build() {
        let info = storing_info(40, 10, 23);
        let sc = SpectralCoupling::from_information(&info).unwrap();
        for t in [0.0, 1.3] {
            let dense = build_coupling(&info, t).unwrap();
            let refac = sc.coupling_at(t).unwrap();
            assert!((dense.matrix() - refac.matrix()).norm_max() < 1e-12);
            // Matrix-free application matches the dense product.
            let sigma: Vec<i8> = (0..40).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
            let hd = dense.apply_spins(&sigma);
            let hf = sc.apply_spins_at(t, &sigma);
            for (a, b) in hd.iter().zip(&hf) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
        let evals = sc.eigenvalues_at(2.0);
        let dense_evals = spectrum(&build_coupling(&info, 2.0).unwrap()).unwrap();
        for (a, b) in evals.iter().zip(&dense_evals) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn gram_path_matches_row_path() {
        // K > N exercises the N x N branch; compare against the explicit
        // C-side construction on a transposable case.
        let gt = make_ground_truths(10, 4, &spec()).unwrap();
        let ex = make_examples(&gt, 5, 0.6, &spec()).unwrap();
        let info =
            build_information_matrix(DataSource::Examples(&ex), SettingKind::Unsupervised)
                .unwrap();
        assert!(info.rows() > info.num_neurons());
        let j = build_coupling(&info, 2.0).unwrap();
        // Brute force through the K x K resolvent.
        let c = info.correlation();
        let k = info.rows();
        let mut a = Mat::<f64>::identity(k, k);
        for i in 0..k {
            for l in 0..k {
                a[(i, l)] += 2.0 * c[(i, l)];
            }
        }
        let inv = a.full_piv_lu().inverse();
        let brute = Scale(3.0 / info.d_n()) * (info.x().transpose() * (inv * info.x()));
        assert!((&brute - j.matrix()).norm_max() < 1e-12);
    }

    #[test]
    fn ode_matches_closed_form() {
        let info = storing_info(40, 8, 29);
        let j0 = build_coupling(&info, 0.0).unwrap();
        let t_final = 2.0;
        let ode = integrate_dreaming_ode(&j0, t_final, 400).unwrap();
        let closed = build_coupling(&info, t_final).unwrap();
        let rel = (ode.matrix() - closed.matrix()).norm_l2() / closed.matrix().norm_l2();
        assert!(rel < 1e-9, "relative Frobenius error {rel}");

        // Eigenvalues of the ODE solution follow the eigenvalue flow.
        let e0 = spectrum(&j0).unwrap();
        let et = spectrum(&ode).unwrap();
        for (&l0, &lt) in e0.iter().zip(&et) {
            assert!((eigen_map(l0, t_final) - lt).abs() < 1e-6);
        }
    }

    #[test]
    fn ode_degenerate_cases() {
        let info = storing_info(20, 4, 31);
        let j0 = build_coupling(&info, 0.0).unwrap();
        let same = integrate_dreaming_ode(&j0, 0.0, 10).unwrap();
        assert_eq!((same.matrix() - j0.matrix()).norm_max(), 0.0);
        assert!(integrate_dreaming_ode(&j0, 1.0, 0).is_err());
        let j1 = build_coupling(&info, 1.0).unwrap();
        assert!(integrate_dreaming_ode(&j1, 2.0, 10).is_err());
    }
}
