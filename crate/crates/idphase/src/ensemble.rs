//! Majority-vote fusion of unwrap runs over reparametrized copies of the
//! input.
//!
//! Each ensemble member deforms the wrapped phase through a diffeomorphism,
//! unwraps the deformed copy hierarchically, and pulls the integer counts
//! back to the original pixel grid. Smooth phase is insensitive to such
//! reparametrizations, so counts that disagree across members flag unstable
//! decisions; a per-pixel majority vote (odd member total) keeps the stable
//! ones.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffeo::{
    conformal_member, ot_member, warp_field, DiffeoMap, MobiusParams, RoiSpec, WarpKind,
};
use crate::raster::{self, GridShape, LabelField, ScalarField, Units};
use crate::unwrap::{compose_result, total_energy, unwrap_hierarchical, UnwrapConfig, UnwrapResult};
use crate::{Error, Result};

/// One reparametrization in the voting ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MemberSpec {
    /// Disk automorphism composed with the shared rectangle→disk conformal
    /// map.
    Conformal { params: MobiusParams },
    /// Optimal-transport reparametrization concentrating resolution on the
    /// given regions of interest.
    Ot { rois: Vec<RoiSpec> },
}

impl MemberSpec {
    fn kind_name(&self) -> &'static str {
        match self {
            MemberSpec::Conformal { .. } => "conformal",
            MemberSpec::Ot { .. } => "ot",
        }
    }

    fn build(&self, shape: GridShape) -> Result<DiffeoMap> {
        match self {
            MemberSpec::Conformal { params } => conformal_member(shape, params),
            MemberSpec::Ot { rois } => ot_member(shape, rois),
        }
    }
}

/// Ensemble layout: an optional identity member plus the listed
/// reparametrized members. The total member count must be odd so votes
/// cannot split evenly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Run the unwrapper once on the untouched input as a member.
    pub include_identity: bool,
    /// Reparametrized members, in vote order after the identity member.
    pub members: Vec<MemberSpec>,
}

impl EnsembleConfig {
    /// Total number of voting members.
    pub fn n(&self) -> usize {
        self.members.len() + usize::from(self.include_identity)
    }

    pub fn validate(&self, shape: GridShape) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Parameter(
                "ensemble needs at least one member".into(),
            ));
        }
        if n % 2 == 0 {
            return Err(Error::Parameter(format!(
                "ensemble size must be odd to guarantee a majority, got {n}"
            )));
        }
        for (index, member) in self.members.iter().enumerate() {
            let check = match member {
                MemberSpec::Conformal { params } => params.validate(),
                MemberSpec::Ot { rois } => rois.iter().try_for_each(|r| r.validate(shape)),
            };
            check.map_err(|e| member_error(index, member.kind_name(), &e))?;
        }
        Ok(())
    }

    /// The default three-member ensemble for a given scene size: identity,
    /// one rotated off-center disk automorphism, and one transport map
    /// toward a three-region density. Region widths are generous fractions
    /// of the frame so the transport solver's default tolerance is reachable
    /// (see [`crate::diffeo::OT_DEFAULT_TOL`]).
    pub fn default_for(shape: GridShape) -> EnsembleConfig {
        let w = shape.width as f64;
        let h = shape.height as f64;
        let s = 0.16 * w.min(h);
        EnsembleConfig {
            include_identity: true,
            members: vec![
                MemberSpec::Conformal {
                    params: MobiusParams {
                        theta: 0.7,
                        z0: [0.25, 0.15],
                    },
                },
                MemberSpec::Ot {
                    rois: vec![
                        RoiSpec {
                            center: [0.30 * w, 0.30 * h],
                            sigma: s,
                            weight: 1.0,
                        },
                        RoiSpec {
                            center: [0.72 * w, 0.35 * h],
                            sigma: 0.9 * s,
                            weight: 0.8,
                        },
                        RoiSpec {
                            center: [0.50 * w, 0.72 * h],
                            sigma: 1.1 * s,
                            weight: 1.2,
                        },
                    ],
                },
            ],
        }
    }
}

fn member_error(index: usize, kind: &str, source: &Error) -> Error {
    Error::Parameter(format!("ensemble member {index} ({kind}): {source}"))
}

/// Per-pixel voting record produced by [`run_ensemble`].
#[derive(Debug, Clone)]
pub struct VoteTrace {
    shape: GridShape,
    /// `candidates[m][p]`: member `m`'s gauge-aligned count at pixel `p`,
    /// `None` where that member has no valid count.
    pub candidates: Vec<Vec<Option<i32>>>,
    /// Winning count per pixel; masked where fewer than ⌈n/2⌉ members voted.
    pub winner: LabelField,
    /// True where the voted pixel had no unique most-frequent count and the
    /// fallback rule picked the winner.
    pub tie: Vec<bool>,
}

impl VoteTrace {
    pub fn shape(&self) -> GridShape {
        self.shape
    }

    /// Fraction of valid pixels whose vote needed the tie fallback.
    pub fn tie_fraction(&self) -> f64 {
        let valid = self.winner.mask().iter().filter(|&&m| m).count();
        if valid == 0 {
            return 0.0;
        }
        let ties = self
            .tie
            .iter()
            .zip(self.winner.mask())
            .filter(|&(&t, &m)| t && m)
            .count();
        ties as f64 / valid as f64
    }

    /// Debug dump: one greyscale PFM plane per member
    /// (`{prefix}.member{i}.pfm`, invalid pixels masked) plus the winner
    /// plane (`{prefix}.winner.pfm`).
    pub fn save(&self, prefix: impl AsRef<Path>) -> Result<()> {
        let prefix = prefix.as_ref();
        let suffixed = |suffix: &str| {
            let mut name = prefix.as_os_str().to_os_string();
            name.push(suffix);
            std::path::PathBuf::from(name)
        };
        for (m, counts) in self.candidates.iter().enumerate() {
            let values: Vec<f64> = counts.iter().map(|c| c.unwrap_or(0) as f64).collect();
            let mask: Vec<bool> = counts.iter().map(Option::is_some).collect();
            let field = ScalarField::new(self.shape, values, mask, Units::Dimensionless)?;
            raster::save_field(&field, suffixed(&format!(".member{m}.pfm")))?;
        }
        let winner_field = ScalarField::new(
            self.shape,
            self.winner.labels().iter().map(|&k| k as f64).collect(),
            self.winner.mask().to_vec(),
            Units::Dimensionless,
        )?;
        raster::save_field(&winner_field, suffixed(".winner.pfm"))
    }
}

/// Pick the most frequent candidate. `identity` optionally names the index
/// of the identity member's candidate for tie-breaking.
///
/// Returns `(winner, tie)`. `tie` is false exactly when one value occurs
/// strictly more often than every other. Otherwise the most frequent values
/// tie, and the fallback picks the identity member's candidate when it is
/// one of them, else the (lower-middle) median of the tied values.
pub fn majority_vote(candidates: &[i32], identity: Option<usize>) -> Result<(i32, bool)> {
    if candidates.is_empty() {
        return Err(Error::Parameter("vote over an empty candidate set".into()));
    }
    let mut freq: BTreeMap<i32, usize> = BTreeMap::new();
    for &c in candidates {
        *freq.entry(c).or_insert(0) += 1;
    }
    let best = *freq.values().max().expect("non-empty");
    let modes: Vec<i32> = freq
        .iter()
        .filter(|&(_, &n)| n == best)
        .map(|(&v, _)| v)
        .collect();
    if modes.len() == 1 {
        return Ok((modes[0], false));
    }
    if let Some(idx) = identity {
        let id_val = *candidates.get(idx).ok_or_else(|| {
            Error::Parameter(format!(
                "identity index {idx} outside candidate set of {}",
                candidates.len()
            ))
        })?;
        if modes.contains(&id_val) {
            return Ok((id_val, true));
        }
    }
    Ok((modes[(modes.len() - 1) / 2], true))
}

/// Gauge offset aligning `counts` to `reference`: the rounded median of the
/// per-pixel difference over jointly valid pixels, 0 when they share none.
fn gauge_offset(counts: &LabelField, reference: &LabelField) -> i32 {
    let mut diffs: Vec<i32> = counts
        .labels()
        .iter()
        .zip(counts.mask())
        .zip(reference.labels().iter().zip(reference.mask()))
        .filter(|&((_, &ma), (_, &mb))| ma && mb)
        .map(|((&a, _), (&b, _))| a - b)
        .collect();
    if diffs.is_empty() {
        return 0;
    }
    diffs.sort_unstable();
    let n = diffs.len();
    if n % 2 == 1 {
        diffs[n / 2]
    } else {
        // Median of an even count can land between two integers; round half
        // away from zero like the phase-gauge convention.
        let mid = f64::from(diffs[n / 2 - 1]) + f64::from(diffs[n / 2]);
        (mid / 2.0).round() as i32
    }
}

/// Round a pulled-back absolute phase against the original wrapped values,
/// giving the member's integer counts on the input grid. Valid where both
/// fields are.
fn reref_counts(absolute: &ScalarField, phi: &ScalarField) -> LabelField {
    let shape = phi.shape();
    let mut pulled = LabelField::zeros(shape);
    for y in 0..shape.height {
        for x in 0..shape.width {
            let p = shape.idx(x, y);
            if absolute.mask()[p] && phi.mask()[p] {
                let k = (absolute.values()[p] - phi.values()[p]) / TAU;
                pulled.set(x, y, k.round() as i32);
            } else {
                pulled.set_valid(x, y, false);
            }
        }
    }
    pulled
}

/// One member's pulled-back counts on the input grid.
fn member_counts(
    map: Option<&DiffeoMap>,
    phi: &ScalarField,
    unwrap_cfg: &UnwrapConfig,
) -> Result<(LabelField, usize)> {
    match map {
        // The identity member skips resampling entirely so a one-member
        // ensemble reproduces the plain unwrapper bit for bit.
        None => {
            let res = unwrap_hierarchical(phi, unwrap_cfg)?;
            Ok((res.k, res.iterations))
        }
        Some(map) => {
            let deformed = warp_field(phi, &map.inverted(), WarpKind::Phase)?;
            let unwrapped = unwrap_hierarchical(&deformed, unwrap_cfg)?;
            // Pull the member's *absolute* phase back (it is smooth, so
            // bilinear resampling is safe) and re-derive the count against
            // the original wrapped value. Resampling the integer counts
            // directly would go off by one in a half-pixel band along every
            // fringe seam, wherever the nearest deformed sample sits across
            // the seam from the pixel it is pulled back to.
            let absolute = warp_field(&unwrapped.phi_abs, map, WarpKind::Linear)?;
            Ok((reref_counts(&absolute, phi), unwrapped.iterations))
        }
    }
}

/// Unwrap `phi` once per ensemble member and fuse the counts by per-pixel
/// majority vote.
///
/// Members run independently (in parallel) and are gauge-aligned to the
/// identity member — or the first member when the identity is not included —
/// before voting, since each unwrap determines counts only up to a global
/// offset. Pixels where fewer than ⌈n/2⌉ members produced a valid count are
/// masked invalid. The result's iteration count sums the members' min-cut
/// solves; its energy is evaluated on the fused counts.
pub fn run_ensemble(
    phi: &ScalarField,
    cfg: &EnsembleConfig,
    unwrap_cfg: &UnwrapConfig,
) -> Result<(UnwrapResult, VoteTrace)> {
    let shape = phi.shape();
    cfg.validate(shape)?;
    unwrap_cfg.validate()?;

    let mut specs: Vec<Option<&MemberSpec>> = Vec::with_capacity(cfg.n());
    if cfg.include_identity {
        specs.push(None);
    }
    specs.extend(cfg.members.iter().map(Some));
    let identity_member = cfg.include_identity.then_some(0);

    // Member maps depend only on the grid (and ROI layout), not on the phase
    // values, so they are precomputed outside the reported wall time.
    let maps: Vec<Option<DiffeoMap>> = specs
        .par_iter()
        .enumerate()
        .map(|(index, spec)| match spec {
            None => Ok(None),
            Some(member) => member
                .build(shape)
                .map(Some)
                .map_err(|e| member_error(index, member.kind_name(), &e)),
        })
        .collect::<Result<_>>()?;

    let started = Instant::now();
    let runs: Vec<(LabelField, usize)> = maps
        .par_iter()
        .map(|map| member_counts(map.as_ref(), phi, unwrap_cfg))
        .collect::<Result<_>>()?;

    // Gauge-align every member to the reference member (index 0).
    let mut counts: Vec<LabelField> = Vec::with_capacity(runs.len());
    let mut iterations = 0usize;
    for (i, (mut k, iters)) in runs.into_iter().enumerate() {
        iterations += iters;
        if i > 0 {
            let offset = gauge_offset(&k, &counts[0]);
            if offset != 0 {
                for label in k.labels_mut() {
                    *label -= offset;
                }
            }
        }
        counts.push(k);
    }

    let n = counts.len();
    let quorum = n / 2 + 1;
    let candidates: Vec<Vec<Option<i32>>> = counts
        .iter()
        .map(|k| {
            k.labels()
                .iter()
                .zip(k.mask())
                .map(|(&v, &m)| m.then_some(v))
                .collect()
        })
        .collect();

    let mut winner = LabelField::zeros(shape);
    let mut tie = vec![false; shape.len()];
    let mut votes: Vec<i32> = Vec::with_capacity(n);
    for p in 0..shape.len() {
        votes.clear();
        let mut identity_slot = None;
        for (m, member) in candidates.iter().enumerate() {
            if let Some(v) = member[p] {
                if identity_member == Some(m) {
                    identity_slot = Some(votes.len());
                }
                votes.push(v);
            }
        }
        let (x, y) = (p % shape.width, p / shape.width);
        if votes.len() < quorum || !phi.mask()[p] {
            winner.set_valid(x, y, false);
            continue;
        }
        let (value, tied) = majority_vote(&votes, identity_slot)?;
        winner.set(x, y, value);
        tie[p] = tied;
    }

    let energy = total_energy(phi, &winner)?;
    let seconds = started.elapsed().as_secs_f64();
    let result = compose_result(phi, winner.clone(), energy, iterations, seconds);
    let trace = VoteTrace {
        shape,
        candidates,
        winner,
        tie,
    };
    Ok((result, trace))
}

/// Diagnostic for the reparametrization-invariance property: unwrap under
/// two maps, pull both back, and report the fraction of jointly valid pixels
/// whose counts agree after removing one shared global offset (the most
/// frequent difference).
pub fn id_invariance_check(
    phi: &ScalarField,
    g1: &DiffeoMap,
    g2: &DiffeoMap,
    unwrap_cfg: &UnwrapConfig,
) -> Result<f64> {
    unwrap_cfg.validate()?;
    let pull = |map: &DiffeoMap| -> Result<LabelField> {
        let deformed = warp_field(phi, &map.inverted(), WarpKind::Phase)?;
        let unwrapped = unwrap_hierarchical(&deformed, unwrap_cfg)?;
        // Same re-referenced pullback as the ensemble members (see
        // `member_counts`): resample the smooth absolute phase, then round
        // against the original wrapped values.
        let absolute = warp_field(&unwrapped.phi_abs, map, WarpKind::Linear)?;
        Ok(reref_counts(&absolute, phi))
    };
    let k1 = pull(g1)?;
    let k2 = pull(g2)?;

    let mut freq: BTreeMap<i32, usize> = BTreeMap::new();
    let mut joint = 0usize;
    for p in 0..phi.shape().len() {
        if k1.mask()[p] && k2.mask()[p] && phi.mask()[p] {
            joint += 1;
            *freq.entry(k1.labels()[p] - k2.labels()[p]).or_insert(0) += 1;
        }
    }
    if joint == 0 {
        return Err(Error::Parameter(
            "no jointly valid pixels to compare".into(),
        ));
    }
    let agreeing = freq.values().max().copied().unwrap_or(0);
    Ok(agreeing as f64 / joint as f64)
}
