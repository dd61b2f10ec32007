//! Zero-forcing MU-MIMO link abstraction.
//!
//! Downlink: rows of `h` are the users' channels (`K x Ntx`). Precoders are the
//! columns of `Hᴴ(HHᴴ)⁻¹`, each normalized to unit norm, and every user gets
//! `P_total / K`. Uplink: columns of `h` are the users' channels at the AP
//! (`Nrx x K`), detected with the ZF filter `(HᴴH)⁻¹Hᴴ`.

use nalgebra::DMatrix;

use crate::channel::{db_to_linear, linear_to_db, C64};
use crate::error::{Result, SimError};

/// Relative pivot below which a Gram matrix is treated as singular.
const RANK_TOL: f64 = 1e-10;

/// Inverse of a Hermitian positive-definite Gram matrix, or a degenerate
/// selection error when it is (numerically) singular.
fn gram_inverse(gram: DMatrix<C64>) -> Result<DMatrix<C64>> {
    let k = gram.nrows();
    let scale = (0..k).map(|i| gram[(i, i)].re).fold(0.0f64, f64::max);
    if k == 0 || !(scale > 0.0) {
        return Err(SimError::DegenerateSelection { users: k });
    }
    let chol = gram
        .cholesky()
        .ok_or(SimError::DegenerateSelection { users: k })?;
    let l = chol.l_dirty();
    let min_pivot = (0..k).map(|i| l[(i, i)].norm_sqr()).fold(f64::INFINITY, f64::min);
    if min_pivot < RANK_TOL * scale {
        return Err(SimError::DegenerateSelection { users: k });
    }
    Ok(chol.inverse())
}

/// Unit-norm ZF precoders, one column per user (`Ntx x K`).
pub fn zf_precoders(h: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let (k, n) = h.shape();
    if k > n {
        return Err(SimError::DegenerateSelection { users: k });
    }
    let inv = gram_inverse(h * h.adjoint())?;
    let mut w = h.adjoint() * inv;
    for mut col in w.column_iter_mut() {
        let norm = col.norm();
        col /= C64::new(norm, 0.0);
    }
    Ok(w)
}

/// Effective per-user ZF gains `1 / [(HHᴴ)⁻¹]_ii`, equal to `|h_i · w_i|²`
/// for the normalized precoders and to the uplink post-filter gain.
pub fn zf_gains(h: &DMatrix<C64>) -> Result<Vec<f64>> {
    let (k, n) = h.shape();
    if k > n {
        return Err(SimError::DegenerateSelection { users: k });
    }
    let inv = gram_inverse(h * h.adjoint())?;
    Ok((0..k).map(|i| 1.0 / inv[(i, i)].re).collect())
}

/// Per-user transmit power under the equal split, in mW.
pub fn equal_power_split_mw(total_dbm: f64, users: usize) -> Vec<f64> {
    let total = db_to_linear(total_dbm);
    vec![total / users as f64; users]
}

/// Downlink SINR (dB) of `user` given precoders `w` for the scheduled rows
/// `h`. Inter-user terms vanish under ZF and are not included.
pub fn dl_sinr_db(
    h: &DMatrix<C64>,
    w: &DMatrix<C64>,
    user: usize,
    total_power_dbm: f64,
    interference_mw: f64,
    noise_mw: f64,
) -> f64 {
    let k = w.ncols();
    let p = db_to_linear(total_power_dbm) / k as f64;
    let gain = (h.row(user) * w.column(user))[(0, 0)].norm_sqr();
    linear_to_db(p * gain / (noise_mw + interference_mw))
}

/// Uplink ZF SINR (dB). `h` is `Nrx x K`; every STA transmits at full power.
pub fn ul_zf_sinr_db(
    h: &DMatrix<C64>,
    user: usize,
    sta_power_dbm: f64,
    interference_mw: f64,
    noise_mw: f64,
) -> Result<f64> {
    let (n, k) = h.shape();
    if k > n {
        return Err(SimError::DegenerateSelection { users: k });
    }
    let inv = gram_inverse(h.adjoint() * h)?;
    let enhancement = inv[(user, user)].re;
    Ok(linear_to_db(
        db_to_linear(sta_power_dbm) / ((noise_mw + interference_mw) * enhancement),
    ))
}
