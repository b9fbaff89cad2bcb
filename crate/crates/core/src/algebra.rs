//! The commutant algebra spanned by the class operators 𝓔₁…𝓔_q:
//! structure constants, abelianness, minimal projections, the reducing
//! subspaces they cut out, and the permutation-built Γ matrix of a
//! commutant element.
//!
//! All spectral work happens on the abstract q×q left regular
//! representation built from the structure constants, never on the
//! N×N matrices directly: q is tiny, the regular representation is
//! perfectly conditioned, and truncation noise stays out of the
//! eigenvalue step. The N×N matrices only enter a posteriori, to
//! verify that the abstract idempotents really are orthogonal
//! projections on the truncated space and to extract their ranges.

use crate::bergman::OperatorMatrix;
use crate::error::{Error, Result};
use crate::linalg;
use crate::monodromy::CompositionTable;
use crate::tolerances as tol;
use ndarray::{s, Array1, Array2};
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Angles (radians) tried in turn as the spread of the combination
/// element whose eigenvalues separate the characters. The first is the
/// golden angle; the rest are fallbacks for the unlucky geometries
/// where some pair of characters happens to collide on a combo.
const COMBO_ANGLES: [f64; 5] = [2.399_963_229_728_653, 1.0, 0.77, 1.91, 2.93];

/// A unit-vector precondition is enforced this tightly.
const UNIT_NORM_TOL: f64 = 1e-9;

/// Class operators are not banded: column i of 𝓔_k carries order-one
/// mass around rows ~0.4·i, so a product of two of them is affected by
/// the truncated tail far below the edge (at truncation 96 the leak is
/// ~1e-10 on the leading third, ~6e-6 at row 40, order one at row 49).
/// Every identity involving such a product is therefore fit and normed
/// on the leading third of the matrix, or on the buffered interior if
/// that is smaller. Identities with the banded M_φ are unaffected: its
/// band keeps inner indices away from the tail.
const PRODUCT_BLOCK_RATIO: f64 = 1.0 / 3.0;

/// Buffer excluding everything outside the product-safe block.
fn product_buffer(n: usize, buffers: &[usize]) -> usize {
    let deepest = buffers.iter().copied().max().unwrap_or(0);
    let ratio_buffer = n - (n as f64 * PRODUCT_BLOCK_RATIO).floor() as usize;
    deepest.max(ratio_buffer)
}

// ---------------------------------------------------------------------------
// Structure constants

/// Multiplication table of the algebra in the 𝓔 basis:
/// 𝓔_j𝓔_k ≈ Σ_m c[j][k][m]·𝓔_m on the fit block, with the least-squares
/// misfit of each product recorded.
#[derive(Debug, Clone)]
pub struct StructureConstants {
    pub q: usize,
    /// c[j][k][m], all indices zero-based in class order.
    pub c: Vec<Vec<Vec<Complex64>>>,
    /// Frobenius misfit of the (j,k) product fit.
    pub residuals: Vec<Vec<f64>>,
    /// Rows and columns excluded from every fit.
    pub buffer: usize,
    /// Singular values of the class-operator family on the fit block.
    pub gram_singulars: Vec<f64>,
}

impl StructureConstants {
    pub fn max_residual(&self) -> f64 {
        self.residuals
            .iter()
            .flatten()
            .fold(0.0f64, |a, &r| a.max(r))
    }
}

fn check_common_shape(es: &[OperatorMatrix]) -> Result<usize> {
    let n = es
        .first()
        .ok_or_else(|| Error::Config("no class operators given".into()))?
        .n();
    if es.iter().any(|e| e.n() != n) {
        return Err(Error::Config(
            "class operators have mismatched truncation orders".into(),
        ));
    }
    Ok(n)
}

/// Frobenius inner products of the interior blocks, q×q Hermitian.
fn gram_matrix(blocks: &[Array2<Complex64>]) -> Array2<Complex64> {
    let q = blocks.len();
    let mut g = Array2::from_elem((q, q), ZERO);
    for j in 0..q {
        for k in j..q {
            let mut s = ZERO;
            for (a, b) in blocks[j].iter().zip(blocks[k].iter()) {
                s += a.conj() * b;
            }
            g[[j, k]] = s;
            g[[k, j]] = s.conj();
        }
    }
    g
}

/// Singular values of the family {vec(E_k)} from the Gram spectrum.
fn gram_singulars(g: &Array2<Complex64>) -> Result<Vec<f64>> {
    let mut eigs: Vec<f64> = linalg::eigenvalues(g.view())?
        .into_iter()
        .map(|l| l.re.max(0.0).sqrt())
        .collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(eigs)
}

/// Least-squares multiplication table of the class operators on the
/// block that excludes `buffer` trailing rows and columns. The caller
/// picks the buffer; the products being fit leak truncated tail well
/// below the edge, so anything smaller than `product_buffer` gives the
/// fit an impossible target (see PRODUCT_BLOCK_RATIO).
///
/// Fails with `LinearDependence` when the family does not have full
/// rank q on the fit block, and with `AlgebraClosure` when any product
/// sits further from the span than the closure limit allows.
pub fn structure_constants(es: &[OperatorMatrix], buffer: usize) -> Result<StructureConstants> {
    let n = check_common_shape(es)?;
    let q = es.len();
    let k_int = n.saturating_sub(buffer);
    if k_int < 2 {
        return Err(Error::Config(format!(
            "fit block {k_int}×{k_int} too small (truncation {n}, buffer {buffer})"
        )));
    }
    let blocks: Vec<Array2<Complex64>> = es
        .iter()
        .map(|e| e.entries.slice(s![..k_int, ..k_int]).to_owned())
        .collect();
    let gram = gram_matrix(&blocks);
    let singulars = gram_singulars(&gram)?;
    let rank = singulars
        .iter()
        .filter(|&&s| s >= tol::GRAM_SIGMA_RATIO * singulars[0])
        .count();
    if rank != q {
        return Err(Error::LinearDependence { rank, expected: q });
    }

    let mut c = vec![vec![vec![ZERO; q]; q]; q];
    let mut residuals = vec![vec![0.0f64; q]; q];
    for j in 0..q {
        for k in 0..q {
            // Product of the full matrices, then restricted: the tail
            // band still carries approximately correct entries, so the
            // sum over it sharpens the block rather than polluting it.
            let prod = es[j].entries.dot(&es[k].entries);
            let prod = prod.slice(s![..k_int, ..k_int]);
            let rhs: Vec<Complex64> = blocks
                .iter()
                .map(|b| b.iter().zip(prod.iter()).map(|(a, p)| a.conj() * p).sum())
                .collect();
            let coeffs = linalg::solve(gram.clone(), rhs)?;
            let mut misfit = 0.0f64;
            for (idx, p) in prod.indexed_iter() {
                let fit: Complex64 = blocks
                    .iter()
                    .zip(&coeffs)
                    .map(|(b, &cm)| cm * b[idx])
                    .sum();
                misfit += (p - fit).norm_sqr();
            }
            let misfit = misfit.sqrt();
            if misfit > tol::STRUCTURE_RESIDUAL_LIMIT {
                return Err(Error::AlgebraClosure {
                    j: j + 1,
                    k: k + 1,
                    residual: misfit,
                    limit: tol::STRUCTURE_RESIDUAL_LIMIT,
                });
            }
            residuals[j][k] = misfit;
            c[j][k] = coeffs;
        }
    }
    Ok(StructureConstants {
        q,
        c,
        residuals,
        buffer,
        gram_singulars: singulars,
    })
}

/// Max interior commutator over all pairs, and whether it clears the
/// abelian threshold. For products of order up to eight a non-abelian
/// verdict contradicts the theory and means the matrices are bad, not
/// the algebra; the caller decides how loudly to say so.
pub fn abelianness_check(sc: &StructureConstants, es: &[OperatorMatrix]) -> (bool, f64) {
    let n = es[0].n();
    let k_int = n.saturating_sub(sc.buffer);
    let mut max_comm = 0.0f64;
    for j in 0..es.len() {
        for k in (j + 1)..es.len() {
            let jk = es[j].entries.dot(&es[k].entries);
            let kj = es[k].entries.dot(&es[j].entries);
            let diff = &jk - &kj;
            let norm = linalg::op_norm_2(diff.slice(s![..k_int, ..k_int]));
            max_comm = max_comm.max(norm);
        }
    }
    (max_comm < tol::ABELIAN_TOL, max_comm)
}

// ---------------------------------------------------------------------------
// Minimal projections

/// A minimal projection of the algebra: its coefficients in the 𝓔
/// basis and its matrix on the truncated space.
#[derive(Debug, Clone)]
pub struct MinimalProjection {
    pub coeffs: Vec<Complex64>,
    pub matrix: OperatorMatrix,
    /// Interior deviations ‖P² − P‖ and ‖P† − P‖ actually measured.
    pub idempotency: f64,
    pub self_adjointness: f64,
}

/// Left regular representation of 𝓔_{j+1}: (L_j)_{m,k} = c[j][k][m].
fn regular_rep(sc: &StructureConstants, j: usize) -> Array2<Complex64> {
    let q = sc.q;
    Array2::from_shape_fn((q, q), |(m, k)| sc.c[j][k][m])
}

/// Eigenvalues of a weighted combination of the regular representation
/// matrices, together with the smallest pairwise gap.
fn combo_spectrum(
    reps: &[Array2<Complex64>],
    angle: f64,
) -> Result<(Array2<Complex64>, Vec<Complex64>, f64)> {
    let q = reps.len();
    let mut w = Array2::from_elem((q, q), ZERO);
    for (j, rep) in reps.iter().enumerate() {
        let weight = Complex64::from_polar(1.0, angle * j as f64);
        w = w + rep.mapv(|x| weight * x);
    }
    let eigs = linalg::eigenvalues(w.view())?;
    let mut gap = f64::INFINITY;
    for i in 0..eigs.len() {
        for j in (i + 1)..eigs.len() {
            gap = gap.min((eigs[i] - eigs[j]).norm());
        }
    }
    Ok((w, eigs, gap))
}

/// Simultaneous diagonalization of the regular representation, then
/// Lagrange interpolation on the separating combination to produce the
/// minimal idempotents. Each is mapped back to an operator matrix and
/// checked for idempotency and self-adjointness on the interior block;
/// a failure there contradicts the C*-structure and is an error, not a
/// warning.
pub fn minimal_projections(
    sc: &StructureConstants,
    es: &[OperatorMatrix],
) -> Result<Vec<MinimalProjection>> {
    let n = check_common_shape(es)?;
    let q = sc.q;
    if es.len() != q {
        return Err(Error::Config(format!(
            "{} operators for q = {q}",
            es.len()
        )));
    }
    let reps: Vec<Array2<Complex64>> = (0..q).map(|j| regular_rep(sc, j)).collect();

    let mut chosen: Option<(Array2<Complex64>, Vec<Complex64>)> = None;
    let mut best_gap = 0.0f64;
    for &angle in &COMBO_ANGLES {
        let (w, eigs, gap) = combo_spectrum(&reps, angle)?;
        best_gap = best_gap.max(gap);
        if gap >= tol::EIGEN_GAP {
            chosen = Some((w, eigs));
            break;
        }
    }
    let (w, eigs) = chosen.ok_or(Error::EigenGap {
        gap: best_gap,
        limit: tol::EIGEN_GAP,
    })?;

    // Lagrange idempotent for λ_i, applied to the coefficient vector of
    // the identity element: that vector is the idempotent's own
    // coefficient vector, because p(W) represents the element p(w).
    let k_int = n.saturating_sub(sc.buffer);
    let mut out = Vec::with_capacity(q);
    for (i, &li) in eigs.iter().enumerate() {
        let mut vec = Array1::from_elem(q, ZERO);
        vec[0] = ONE;
        for (j, &lj) in eigs.iter().enumerate() {
            if j == i {
                continue;
            }
            let scaled = w.dot(&vec);
            vec = (scaled - vec.mapv(|x| lj * x)) / (li - lj);
        }
        let coeffs: Vec<Complex64> = vec.to_vec();

        let mut entries = Array2::from_elem((n, n), ZERO);
        for (e, &cm) in es.iter().zip(&coeffs) {
            entries = entries + e.entries.mapv(|x| cm * x);
        }
        let matrix = OperatorMatrix {
            entries,
            label: format!("P_{}", i + 1),
            buffer: sc.buffer,
        };

        let sq = matrix.entries.dot(&matrix.entries);
        let idem = linalg::op_norm_2((&sq - &matrix.entries).slice(s![..k_int, ..k_int]));
        if idem > tol::PROJECTION_TOL {
            return Err(Error::ProjectionFault {
                index: i + 1,
                deviation: idem,
                limit: tol::PROJECTION_TOL,
            });
        }
        let adj = matrix.adjoint();
        let sa = linalg::op_norm_2((&adj - &matrix.entries).slice(s![..k_int, ..k_int]));
        if sa > tol::PROJECTION_TOL {
            return Err(Error::ProjectionFault {
                index: i + 1,
                deviation: sa,
                limit: tol::PROJECTION_TOL,
            });
        }
        out.push(MinimalProjection {
            coeffs,
            matrix,
            idempotency: idem,
            self_adjointness: sa,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Reducing subspaces

/// Range of one minimal projection with its invariance residuals.
///
/// `dimension` is the numerical rank of the symmetrized projection at
/// the rank threshold. When the subspace is a monomial span (every zⁿ
/// class) the compression is again a projection and the count is the
/// subspace dimension at this truncation. In general the compression
/// smears the truncation edge into genuine intermediate eigenvalues
/// (for the mixed cubic they cluster at 1/3 and 2/3), so the ranks of
/// complementary projections overlap instead of partitioning N.
#[derive(Debug, Clone)]
pub struct ReducingSubspace {
    pub dimension: usize,
    /// Orthonormal basis of the range, coefficient vectors of length N.
    pub basis: Vec<Array1<Complex64>>,
    /// ‖(I−P)·M_φ·P‖ and ‖(I−P)·M_φ†·P‖ on the interior block.
    pub invariance: f64,
    pub invariance_adjoint: f64,
    /// Set when either residual exceeds the flag limit.
    pub flagged: bool,
}

/// Ranges of the minimal projections and their invariance under M_φ
/// and its adjoint. Each projection is symmetrized before the range is
/// extracted, absorbing the last digit of asymmetry the a posteriori
/// check admitted; the range basis itself comes from a rank-revealing
/// orthonormalization of the symmetrized columns.
pub fn reducing_subspaces(
    projections: &[MinimalProjection],
    m_phi: &OperatorMatrix,
) -> Result<Vec<ReducingSubspace>> {
    let n = m_phi.n();
    let mut out = Vec::with_capacity(projections.len());
    for p in projections {
        if p.matrix.n() != n {
            return Err(Error::Config(
                "projection and M_φ truncation orders differ".into(),
            ));
        }
        let adj = p.matrix.adjoint();
        let sym = (&p.matrix.entries + &adj).mapv(|x| 0.5 * x);

        let mut cols: Vec<Array1<Complex64>> =
            (0..n).map(|m| sym.column(m).to_owned()).collect();
        linalg::orthonormalize_columns_pivoted(&mut cols, tol::RANK_THRESHOLD);
        let dimension = cols.len();

        let k_int = n.saturating_sub(p.matrix.buffer.max(m_phi.buffer));
        let ident = Array2::from_shape_fn((n, n), |(a, b)| if a == b { ONE } else { ZERO });
        let complement = &ident - &sym;
        let escape = complement.dot(&m_phi.entries).dot(&sym);
        let invariance = linalg::op_norm_2(escape.slice(s![..k_int, ..k_int]));
        let escape_adj = complement.dot(&m_phi.adjoint()).dot(&sym);
        let invariance_adjoint = linalg::op_norm_2(escape_adj.slice(s![..k_int, ..k_int]));

        out.push(ReducingSubspace {
            dimension,
            basis: cols,
            invariance,
            invariance_adjoint,
            flagged: invariance > tol::INVARIANCE_FLAG
                || invariance_adjoint > tol::INVARIANCE_FLAG,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Full decomposition

/// Everything the algebra analysis produces in one pass. When the
/// algebra measures non-abelian (impossible for orders up to eight,
/// possible in principle beyond the proven regime) the projection and
/// subspace lists stay empty and only the flag and commutator survive.
#[derive(Debug, Clone)]
pub struct AlgebraDecomposition {
    pub structure: StructureConstants,
    pub abelian: bool,
    pub max_commutator: f64,
    pub projections: Vec<MinimalProjection>,
    pub subspaces: Vec<ReducingSubspace>,
}

/// Run the whole chain: structure constants on the product-safe block
/// of the class operators and M_φ, abelianness, minimal projections,
/// reducing subspaces.
pub fn decompose(es: &[OperatorMatrix], m_phi: &OperatorMatrix) -> Result<AlgebraDecomposition> {
    let n = check_common_shape(es)?;
    let buffers: Vec<usize> = es
        .iter()
        .map(|e| e.buffer)
        .chain([m_phi.buffer])
        .collect();
    let buffer = product_buffer(n, &buffers);
    let structure = structure_constants(es, buffer)?;
    let (abelian, max_commutator) = abelianness_check(&structure, es);
    let (projections, subspaces) = if abelian {
        let projections = minimal_projections(&structure, es)?;
        let subspaces = reducing_subspaces(&projections, m_phi)?;
        (projections, subspaces)
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(AlgebraDecomposition {
        structure,
        abelian,
        max_commutator,
        projections,
        subspaces,
    })
}

// ---------------------------------------------------------------------------
// Γ matrix

/// The n×n matrix built from a branch-weight vector by permuting its
/// entries along the composition table, row l reading off r∘π_l⁻¹.
/// Unitarity is measured, never asserted: it holds exactly when the
/// weights come from a unitary element of the commutant, and means
/// nothing for an arbitrary unit vector.
#[derive(Debug, Clone)]
pub struct GammaMatrix {
    pub matrix: Array2<Complex64>,
    /// ‖Γ†Γ − I‖_F.
    pub unitarity: f64,
}

pub fn gamma_matrix(r: &[Complex64], table: &CompositionTable) -> Result<GammaMatrix> {
    let n = table.n();
    if r.len() != n {
        return Err(Error::Config(format!(
            "weight vector length {} against {} branches",
            r.len(),
            n
        )));
    }
    let norm = r.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::Config(format!(
            "weight vector has norm {norm}, expected a unit vector"
        )));
    }
    table.validate()?;
    let matrix = Array2::from_shape_fn((n, n), |(l, i)| {
        r[table.compose_labels(table.inverse_branch(l), i)]
    });
    let gram = matrix.t().mapv(|x| x.conj()).dot(&matrix);
    let mut dev = 0.0f64;
    for ((a, b), &g) in gram.indexed_iter() {
        let target = if a == b { ONE } else { ZERO };
        dev += (g - target).norm_sqr();
    }
    Ok(GammaMatrix {
        matrix,
        unitarity: dev.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bergman::{class_matrices, mult_matrix, CircleOptions};
    use crate::blaschke::BlaschkeProduct;
    use crate::continuation::Engine;
    use crate::monodromy::{self, MonodromyData};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn product(zeros: &[Complex64]) -> BlaschkeProduct {
        BlaschkeProduct::new(zeros.to_vec(), ONE).unwrap()
    }

    fn analyze(phi: &BlaschkeProduct) -> (Engine, MonodromyData) {
        let engine = Engine::new(phi.clone(), tol::CLEARANCE_DEFAULT).unwrap();
        let md = monodromy::analyze(&engine).unwrap();
        (engine, md)
    }

    fn class_ops(
        engine: &Engine,
        md: &MonodromyData,
        n_basis: usize,
    ) -> Vec<OperatorMatrix> {
        class_matrices(engine, md, n_basis, CircleOptions::default()).unwrap()
    }

    /// Exact class operators of zⁿ: 𝓔_k = diag over m of ω^{(k−1)(m+1)},
    /// ω = e^{2πi/n}, one class per power of the rotation.
    fn power_oracle(n: usize, n_basis: usize, buffer: usize) -> Vec<OperatorMatrix> {
        (0..n)
            .map(|k| {
                let entries = Array2::from_shape_fn((n_basis, n_basis), |(l, m)| {
                    if l == m {
                        Complex64::from_polar(
                            1.0,
                            std::f64::consts::TAU * (k as f64) * ((m + 1) as f64) / n as f64,
                        )
                    } else {
                        ZERO
                    }
                });
                OperatorMatrix {
                    entries,
                    label: format!("E_{}", k + 1),
                    buffer,
                }
            })
            .collect()
    }

    #[test]
    fn power_product_structure_matches_the_cyclic_group_algebra() {
        let n = 4;
        let oracle = power_oracle(n, 48, 4);
        let sc = structure_constants(&oracle, 4).unwrap();
        assert_eq!(sc.q, n);
        for j in 0..n {
            for k in 0..n {
                assert!(sc.residuals[j][k] < 1e-10);
                for m in 0..n {
                    let expect = if m == (j + k) % n { 1.0 } else { 0.0 };
                    assert!(
                        (sc.c[j][k][m] - c(expect, 0.0)).norm() < 1e-10,
                        "c[{j}][{k}][{m}] = {}",
                        sc.c[j][k][m]
                    );
                }
            }
        }
        let (abelian, max_comm) = abelianness_check(&sc, &oracle);
        assert!(abelian);
        assert!(max_comm < 1e-12);
    }

    #[test]
    fn extracted_power_product_operators_recover_the_same_table() {
        let phi = product(&[ZERO; 4]);
        let (engine, md) = analyze(&phi);
        let es = class_ops(&engine, &md, 48);
        let m_phi = mult_matrix(&phi, 48).unwrap();
        let buffers: Vec<usize> = es.iter().map(|e| e.buffer).chain([m_phi.buffer]).collect();
        let sc = structure_constants(&es, product_buffer(48, &buffers)).unwrap();
        assert!(sc.max_residual() < tol::STRUCTURE_RESIDUAL_TOL);
        // Every class is a single branch, so each product is exactly the
        // composed branch's operator: the group algebra of the table
        // (labels are the solver's, not the cyclic order).
        for j in 0..4 {
            for k in 0..4 {
                let composed = md.table.compose_labels(md.orbits[j][0], md.orbits[k][0]);
                let t = md.class_of[composed];
                for m in 0..4 {
                    let expect = if m == t { 1.0 } else { 0.0 };
                    assert!(
                        (sc.c[j][k][m] - c(expect, 0.0)).norm() < 1e-6,
                        "c[{j}][{k}][{m}] = {} (table sends to {t})",
                        sc.c[j][k][m]
                    );
                }
            }
        }
    }

    #[test]
    fn identity_class_multiplies_trivially() {
        let phi = product(&[ZERO, ZERO, c(0.5, 0.0)]);
        let (engine, md) = analyze(&phi);
        let es = class_ops(&engine, &md, 96);
        let m_phi = mult_matrix(&phi, 96).unwrap();
        let buffers: Vec<usize> = es.iter().map(|e| e.buffer).chain([m_phi.buffer]).collect();
        let sc = structure_constants(&es, product_buffer(96, &buffers)).unwrap();
        for k in 0..sc.q {
            for m in 0..sc.q {
                let expect = if m == k { ONE } else { ZERO };
                assert!(
                    (sc.c[0][k][m] - expect).norm() < 1e-7,
                    "c[0][{k}][{m}] = {}",
                    sc.c[0][k][m]
                );
            }
        }
    }

    #[test]
    fn duplicated_operators_are_rejected_as_dependent() {
        let oracle = power_oracle(2, 32, 4);
        let pair = vec![oracle[0].clone(), oracle[0].clone()];
        match structure_constants(&pair, 4) {
            Err(Error::LinearDependence { rank, expected }) => {
                assert_eq!((rank, expected), (1, 2));
            }
            other => panic!("expected linear dependence, got {other:?}"),
        }
    }

    #[test]
    fn half_power_projections_split_parity() {
        let phi = product(&[ZERO, ZERO]);
        let (engine, md) = analyze(&phi);
        let es = class_ops(&engine, &md, 64);
        let m_phi = mult_matrix(&phi, 64).unwrap();
        let deco = decompose(&es, &m_phi).unwrap();
        assert!(deco.abelian);
        assert!(deco.max_commutator < 1e-10);
        assert_eq!(deco.projections.len(), 2);

        // (𝓔₁ ± 𝓔₂)/2 in some order.
        let half = 0.5;
        let mut seen_plus = false;
        let mut seen_minus = false;
        for p in &deco.projections {
            assert!((p.coeffs[0] - c(half, 0.0)).norm() < 1e-9);
            if (p.coeffs[1] - c(half, 0.0)).norm() < 1e-9 {
                seen_plus = true;
            }
            if (p.coeffs[1] + c(half, 0.0)).norm() < 1e-9 {
                seen_minus = true;
            }
        }
        assert!(seen_plus && seen_minus);

        // Ranges are the even and odd monomial spans: dimensions split
        // the truncated space, and every basis vector lives on a single
        // parity.
        let dims: Vec<usize> = deco.subspaces.iter().map(|s| s.dimension).collect();
        let mut sorted = dims.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![32, 32]);
        for (p, sub) in deco.projections.iter().zip(&deco.subspaces) {
            let odd_projection = (p.coeffs[1] - c(half, 0.0)).norm() < 1e-9;
            for v in &sub.basis {
                let (mut on, mut off) = (0.0f64, 0.0f64);
                for (m, x) in v.iter().enumerate() {
                    let is_odd = m % 2 == 1;
                    if is_odd == odd_projection {
                        on += x.norm_sqr();
                    } else {
                        off += x.norm_sqr();
                    }
                }
                assert!(on > 0.5);
                assert!(off.sqrt() < 1e-7, "parity leak {}", off.sqrt());
            }
            assert!(sub.invariance < tol::INVARIANCE_TOL);
            assert!(sub.invariance_adjoint < tol::INVARIANCE_TOL);
            assert!(!sub.flagged);
        }
    }

    #[test]
    fn power_product_ranges_are_congruence_classes() {
        let n = 3;
        let phi = product(&[ZERO; 3]);
        let (engine, md) = analyze(&phi);
        let es = class_ops(&engine, &md, 48);
        let m_phi = mult_matrix(&phi, 48).unwrap();
        let deco = decompose(&es, &m_phi).unwrap();
        assert_eq!(deco.projections.len(), n);
        let mut residues_seen = vec![false; n];
        for sub in &deco.subspaces {
            assert!(sub.dimension == 16);
            // Identify the congruence class from the first basis vector,
            // then hold every vector to it.
            let lead = sub.basis[0]
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.norm_sqr().partial_cmp(&b.norm_sqr()).unwrap())
                .map(|(m, _)| m % n)
                .unwrap();
            residues_seen[lead] = true;
            for v in &sub.basis {
                let mut off = 0.0f64;
                for (m, x) in v.iter().enumerate() {
                    if m % n != lead {
                        off += x.norm_sqr();
                    }
                }
                assert!(off.sqrt() < 1e-7);
            }
            assert!(sub.invariance < tol::INVARIANCE_TOL);
        }
        assert!(residues_seen.iter().all(|&b| b));
    }

    #[test]
    fn moebius_commutant_is_scalar() {
        let phi = product(&[c(0.3, 0.1)]);
        let (engine, md) = analyze(&phi);
        assert_eq!(md.q, 1);
        let es = class_ops(&engine, &md, 32);
        let m_phi = mult_matrix(&phi, 32).unwrap();
        let deco = decompose(&es, &m_phi).unwrap();
        assert!(deco.abelian);
        assert_eq!(deco.projections.len(), 1);
        assert!((deco.projections[0].coeffs[0] - ONE).norm() < 1e-9);
        let sub = &deco.subspaces[0];
        assert_eq!(sub.dimension, 32);
        assert!(sub.invariance < tol::INVARIANCE_TOL);
    }

    #[test]
    fn mixed_cubic_decomposition_meets_every_bound() {
        let phi = product(&[ZERO, ZERO, c(0.5, 0.0)]);
        let (engine, md) = analyze(&phi);
        assert_eq!(md.q, 2);
        let es = class_ops(&engine, &md, 96);
        let m_phi = mult_matrix(&phi, 96).unwrap();
        let deco = decompose(&es, &m_phi).unwrap();
        assert!(deco.structure.max_residual() < tol::STRUCTURE_RESIDUAL_TOL);
        assert!(deco.abelian, "commutator {}", deco.max_commutator);
        assert_eq!(deco.projections.len(), 2);

        let n = 96;
        let k_int = n - deco.structure.buffer;
        // Resolution of identity and mutual orthogonality at the
        // operator level.
        let mut sum = Array2::from_elem((n, n), ZERO);
        for p in &deco.projections {
            sum = sum + p.matrix.entries.clone();
        }
        let diff = &sum - &es[0].entries;
        assert!(
            linalg::op_norm_2(diff.slice(s![..k_int, ..k_int])) < tol::PROJECTION_TOL,
            "projections do not resolve the identity"
        );
        let cross = deco.projections[0]
            .matrix
            .entries
            .dot(&deco.projections[1].matrix.entries);
        assert!(linalg::op_norm_2(cross.slice(s![..k_int, ..k_int])) < tol::PROJECTION_TOL);

        assert_eq!(deco.subspaces.len(), 2);
        let mut dims = 0;
        for sub in &deco.subspaces {
            assert!(sub.dimension > 0);
            assert!(sub.invariance < tol::INVARIANCE_TOL, "{}", sub.invariance);
            assert!(sub.invariance_adjoint < tol::INVARIANCE_TOL);
            assert!(!sub.flagged);
            dims += sub.dimension;
        }
        // The ranges jointly span (the projections sum to 𝓔₁ entrywise)
        // but each picks up genuine transition directions where the
        // compression smears the truncation edge, so the counts overlap
        // rather than partitioning N. The traces partition exactly:
        // trace is linear in the trustworthy entries.
        assert!(dims >= n);
        for sub in &deco.subspaces {
            assert!(sub.dimension < n);
        }
        let trace: f64 = deco
            .projections
            .iter()
            .map(|p| (0..n).map(|m| p.matrix.entries[[m, m]]).sum::<Complex64>().re)
            .sum();
        let trace_e1: f64 = (0..n).map(|m| es[0].entries[[m, m]]).sum::<Complex64>().re;
        assert!((trace - trace_e1).abs() < 1e-6, "trace split {trace} vs {trace_e1}");
    }

    /// Prints the spectrum of the symmetrized mixed-cubic projections.
    /// Not a check; run on demand with --ignored --nocapture when
    /// retuning rank extraction.
    #[test]
    #[ignore]
    fn mixed_cubic_projection_spectrum_trace() {
        let phi = product(&[ZERO, ZERO, c(0.5, 0.0)]);
        let (engine, md) = analyze(&phi);
        let es = class_ops(&engine, &md, 96);
        let m_phi = mult_matrix(&phi, 96).unwrap();
        let deco = decompose(&es, &m_phi).unwrap();
        for (i, p) in deco.projections.iter().enumerate() {
            let adj = p.matrix.adjoint();
            let sym = (&p.matrix.entries + &adj).mapv(|x| 0.5 * x);
            let mut eigs: Vec<f64> = linalg::eigenvalues(sym.view())
                .unwrap()
                .iter()
                .map(|l| l.re)
                .collect();
            eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let trace: Complex64 = (0..96).map(|m| sym[[m, m]]).sum();
            println!("P_{} trace {:.6}", i + 1, trace.re);
            for (m, l) in eigs.iter().enumerate() {
                println!("  eig[{m:2}] = {l:+.3e}");
            }
        }
    }

    #[test]
    fn degenerate_characters_are_refused_not_merged() {
        // A synthetic two-dimensional algebra whose generator satisfies
        // x² = x − ¼: the character values coincide at ½, so no
        // combination separates them.
        let mut c3 = vec![vec![vec![ZERO; 2]; 2]; 2];
        c3[0][0] = vec![ONE, ZERO];
        c3[0][1] = vec![ZERO, ONE];
        c3[1][0] = vec![ZERO, ONE];
        c3[1][1] = vec![c(-0.25, 0.0), ONE];
        let sc = StructureConstants {
            q: 2,
            c: c3,
            residuals: vec![vec![0.0; 2]; 2],
            buffer: 4,
            gram_singulars: vec![1.0, 1.0],
        };
        let dummy = power_oracle(2, 16, 4);
        // The collapsed pair sits below the eigensolver's resolution:
        // the computed gap lands within rounding of the threshold, so
        // the refusal fires either at the gap check or, if a marginal
        // gap slips through, at the idempotency check on the garbage
        // the near-zero Lagrange denominators produce. Both are loud;
        // what must never happen is a silent merge into fewer classes.
        match minimal_projections(&sc, &dummy) {
            Err(Error::EigenGap { gap, limit }) => assert!(gap < limit),
            Err(Error::ProjectionFault { deviation, limit, .. }) => {
                assert!(deviation > limit);
            }
            other => panic!("expected a refusal, got {other:?}"),
        }
    }

    #[test]
    fn gamma_of_the_identity_weights_is_the_identity_matrix() {
        let n = 3;
        let table = CompositionTable {
            table: (0..n).map(|i| (0..n).map(|k| (i + k) % n).collect()).collect(),
        };
        let mut r = vec![ZERO; n];
        r[0] = ONE;
        let g = gamma_matrix(&r, &table).unwrap();
        for ((a, b), &x) in g.matrix.indexed_iter() {
            let expect = if a == b { ONE } else { ZERO };
            assert!((x - expect).norm() < 1e-15);
        }
        assert!(g.unitarity < 1e-12);
    }

    #[test]
    fn rotation_class_weights_give_the_cyclic_permutation_gamma() {
        let n = 5;
        let table = CompositionTable {
            table: (0..n).map(|i| (0..n).map(|k| (i + k) % n).collect()).collect(),
        };
        // Weight one on the generating rotation branch: the unitary
        // element is that single branch's class operator, and Γ must
        // come out as the corresponding cyclic permutation matrix.
        let mut r = vec![ZERO; n];
        r[1] = ONE;
        let g = gamma_matrix(&r, &table).unwrap();
        assert!(g.unitarity < 1e-12, "unitarity {}", g.unitarity);
        for ((l, i), &x) in g.matrix.indexed_iter() {
            let expect = if i == (l + 1) % n { ONE } else { ZERO };
            assert!((x - expect).norm() < 1e-15, "entry ({l},{i}) = {x}");
        }
        for i in 0..n {
            assert!((g.matrix[[0, i]] - r[i]).norm() < 1e-15);
        }
    }

    #[test]
    fn unimodular_projection_combinations_give_unitary_gamma() {
        let phi = product(&[ZERO, ZERO, c(0.5, 0.0)]);
        let (engine, md) = analyze(&phi);
        let es = class_ops(&engine, &md, 96);
        let m_phi = mult_matrix(&phi, 96).unwrap();
        let deco = decompose(&es, &m_phi).unwrap();
        // W = P₁ + i·P₂ is unitary in the algebra; its branch weights
        // are the 𝓔-coefficients spread over each class.
        let lambdas = [ONE, c(0.0, 1.0)];
        let mut w = vec![ZERO; deco.structure.q];
        for (p, &l) in deco.projections.iter().zip(&lambdas) {
            for (slot, &x) in w.iter_mut().zip(&p.coeffs) {
                *slot += l * x;
            }
        }
        let mut r: Vec<Complex64> = md.class_of.iter().map(|&k| w[k]).collect();
        let norm = r.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-7, "weight norm {norm}");
        for x in &mut r {
            *x /= norm;
        }
        let g = gamma_matrix(&r, &md.table).unwrap();
        assert!(
            g.unitarity < tol::GAMMA_UNITARY_TOL,
            "unitarity {}",
            g.unitarity
        );
    }

    #[test]
    fn non_unit_weights_are_rejected() {
        let table = CompositionTable {
            table: vec![vec![0, 1], vec![1, 0]],
        };
        let r = vec![ONE, ONE];
        assert!(matches!(
            gamma_matrix(&r, &table),
            Err(Error::Config(_))
        ));
    }
}
