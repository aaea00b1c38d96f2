//! The multi-machine protocol.
//!
//! Every machine turns its sample into a [`MachineSummary`] and ships it as a
//! [`MachinePayload`] of encoded sketches. The coordinator decodes the
//! payloads, builds the pre-merged sketch tree over the per-machine NDV
//! sketches and estimates the global singleton count `f1` by adding, for each
//! machine `j`, `|F1_j ∪ B_j| - |B_j|` where `B_j` is the union of every
//! other machine. `B_j` is assembled from `O(log k)` tree nodes.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::frequency::FreqDict;
use crate::hash::{bernoulli_from_hash, derive_seed, hash64, mix64};
use crate::sketch::{CountSketch, DistinctSketch, SketchBytes};

/// A sketch a machine may send.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Ndv,
    F1,
    CountSketch,
    ResampleNdv,
    ResampleF1,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Ndv => "ndv",
            Role::F1 => "f1",
            Role::CountSketch => "cs",
            Role::ResampleNdv => "resample_ndv",
            Role::ResampleF1 => "resample_f1",
        }
    }
}

/// Which optional sketches the machines build and send. The NDV and F1
/// sketches are always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoleSet {
    pub count_sketch: bool,
    pub resample: bool,
}

impl RoleSet {
    pub const MINIMAL: RoleSet = RoleSet {
        count_sketch: false,
        resample: false,
    };

    pub const ALL: RoleSet = RoleSet {
        count_sketch: true,
        resample: true,
    };

    pub fn roles(self) -> Vec<Role> {
        let mut out = vec![Role::Ndv, Role::F1];
        if self.count_sketch {
            out.push(Role::CountSketch);
        }
        if self.resample {
            out.extend([Role::ResampleNdv, Role::ResampleF1]);
        }
        out
    }
}

/// Shared sketch parameters, expressed as empty prototype sketches.
#[derive(Debug, Clone)]
pub struct SummaryParams<S> {
    pub l0: S,
    pub count_sketch: CountSketch,
    /// Bernoulli rate of the per-occurrence resample.
    pub resample_rate: f64,
    pub roles: RoleSet,
}

impl<S: DistinctSketch> SummaryParams<S> {
    pub fn new(
        l0: S,
        count_sketch: CountSketch,
        resample_rate: f64,
        roles: RoleSet,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&resample_rate) {
            return Err(Error::Config(format!(
                "resample rate must be in [0, 1], got {resample_rate}"
            )));
        }
        Ok(SummaryParams {
            l0: l0.empty_like(),
            count_sketch: count_sketch.empty_like(),
            resample_rate,
            roles,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResampleSketches<S> {
    pub ndv: S,
    pub f1: S,
}

/// Everything one machine contributes.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineSummary<S> {
    /// All locally present ids.
    pub ndv: S,
    /// Ids seen exactly once locally.
    pub f1: S,
    pub count_sketch: Option<CountSketch>,
    pub resample: Option<ResampleSketches<S>>,
    pub n_local: u64,
    pub d_local: u64,
}

/// Resample seed of machine `machine` under `master`.
pub fn resample_seed(master: u64, machine: usize) -> u64 {
    derive_seed(master, 0x5e5a_0000 + machine as u64)
}

/// Summarizes a raw occurrence stream.
pub fn summarize_machine<S: DistinctSketch>(
    stream: &[u64],
    params: &SummaryParams<S>,
    resample_seed: u64,
) -> MachineSummary<S> {
    summarize_dict(
        &FreqDict::from_stream(stream.iter().copied()),
        params,
        resample_seed,
    )
}

/// Summarizes a local frequency dictionary.
///
/// The resample keeps occurrence `t` of id `x` iff a hash of
/// `(x, t, resample_seed)` falls under the rate, which makes it independent
/// of iteration order and independent across machines with distinct seeds.
pub fn summarize_dict<S: DistinctSketch>(
    dict: &FreqDict,
    params: &SummaryParams<S>,
    resample_seed: u64,
) -> MachineSummary<S> {
    let mut ndv = params.l0.empty_like();
    let mut f1 = params.l0.empty_like();
    let mut cs = params
        .roles
        .count_sketch
        .then(|| params.count_sketch.empty_like());
    let mut resample = params.roles.resample.then(|| ResampleSketches {
        ndv: params.l0.empty_like(),
        f1: params.l0.empty_like(),
    });
    for (id, count) in dict.iter() {
        ndv.insert(id);
        if count == 1 {
            f1.insert(id);
        }
        if let Some(cs) = cs.as_mut() {
            cs.update(id, count as i64);
        }
        if let Some(rs) = resample.as_mut() {
            let kept = (0..count)
                .filter(|&t| {
                    bernoulli_from_hash(hash64(id ^ mix64(t), resample_seed), params.resample_rate)
                })
                .count();
            if kept >= 1 {
                rs.ndv.insert(id);
            }
            if kept == 1 {
                rs.f1.insert(id);
            }
        }
    }
    MachineSummary {
        ndv,
        f1,
        count_sketch: cs,
        resample,
        n_local: dict.total(),
        d_local: dict.len() as u64,
    }
}

/// Encoded form of a [`MachineSummary`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachinePayload {
    pub ndv: SketchBytes,
    pub f1: SketchBytes,
    pub count_sketch: Option<SketchBytes>,
    pub resample: Option<(SketchBytes, SketchBytes)>,
    pub n_local: u64,
    pub d_local: u64,
}

/// Bytes charged for the two scalar fields.
pub const SCALAR_BYTES: u64 = 16;

impl MachinePayload {
    pub fn role_bytes(&self) -> Vec<(Role, u64)> {
        let mut out = vec![
            (Role::Ndv, self.ndv.len() as u64),
            (Role::F1, self.f1.len() as u64),
        ];
        if let Some(cs) = &self.count_sketch {
            out.push((Role::CountSketch, cs.len() as u64));
        }
        if let Some((n, f)) = &self.resample {
            out.push((Role::ResampleNdv, n.len() as u64));
            out.push((Role::ResampleF1, f.len() as u64));
        }
        out
    }

    pub fn total_bytes(&self) -> u64 {
        self.role_bytes().iter().map(|&(_, b)| b).sum::<u64>() + SCALAR_BYTES
    }
}

impl<S: DistinctSketch> MachineSummary<S> {
    pub fn to_payload(&self) -> Result<MachinePayload> {
        Ok(MachinePayload {
            ndv: self.ndv.encode(),
            f1: self.f1.encode(),
            count_sketch: self
                .count_sketch
                .as_ref()
                .map(CountSketch::encode)
                .transpose()?,
            resample: self
                .resample
                .as_ref()
                .map(|r| (r.ndv.encode(), r.f1.encode())),
            n_local: self.n_local,
            d_local: self.d_local,
        })
    }

    pub fn from_payload(p: &MachinePayload) -> Result<Self> {
        Ok(MachineSummary {
            ndv: S::decode(p.ndv.as_slice())?,
            f1: S::decode(p.f1.as_slice())?,
            count_sketch: p
                .count_sketch
                .as_ref()
                .map(|b| CountSketch::decode(b.as_slice()))
                .transpose()?,
            resample: p
                .resample
                .as_ref()
                .map(|(n, f)| -> Result<_> {
                    Ok(ResampleSketches {
                        ndv: S::decode(n.as_slice())?,
                        f1: S::decode(f.as_slice())?,
                    })
                })
                .transpose()?,
            n_local: p.n_local,
            d_local: p.d_local,
        })
    }
}

/// Pre-merged sketch tree. `levels[0]` holds the (padded) per-machine NDV
/// sketches and `levels[l+1][i] = levels[l][2i] ∪ levels[l][2i+1]`; the top
/// level holds two sketches.
#[derive(Debug, Clone)]
pub struct PmTree<S> {
    levels: Vec<Vec<S>>,
    machines: usize,
    merges: u64,
}

impl<S: DistinctSketch> PmTree<S> {
    /// Pads to a power of two (at least 2) with empty sketches, then halves
    /// until two sketches remain.
    pub fn build(ndv_sketches: &[S]) -> Result<Self> {
        let first = ndv_sketches
            .first()
            .ok_or_else(|| Error::Config("no machines".into()))?;
        let machines = ndv_sketches.len();
        let padded = machines.next_power_of_two().max(2);
        let mut base = ndv_sketches.to_vec();
        base.resize(padded, first.empty_like());

        let mut levels = vec![base];
        let mut merges = 0u64;
        let mut width = padded;
        while width > 2 {
            width /= 2;
            let below = levels.last().unwrap();
            let mut next = Vec::with_capacity(width);
            for i in 0..width {
                let mut node = below[2 * i].clone();
                node.merge_from(&below[2 * i + 1])?;
                merges += 1;
                next.push(node);
            }
            levels.push(next);
        }
        Ok(PmTree {
            levels,
            machines,
            merges,
        })
    }

    pub fn levels(&self) -> &[Vec<S>] {
        &self.levels
    }

    pub fn height(&self) -> usize {
        self.levels.len()
    }

    /// Real (unpadded) machine count.
    pub fn machines(&self) -> usize {
        self.machines
    }

    pub fn padded_machines(&self) -> usize {
        self.levels[0].len()
    }

    /// Merges spent building the tree.
    pub fn build_merges(&self) -> u64 {
        self.merges
    }

    pub fn node(&self, level: usize, index: usize) -> &S {
        &self.levels[level][index]
    }

    /// `(level, index)` of nodes whose union is every padded machine except
    /// `index`: the sibling at each level on the path to the root.
    pub fn complement_cover(&self, index: usize) -> Result<Vec<(usize, usize)>> {
        if index >= self.padded_machines() {
            return Err(Error::IndexOutOfRange {
                index,
                len: self.padded_machines(),
            });
        }
        let mut out = Vec::with_capacity(self.height());
        let mut node = index;
        for level in 0..self.height() {
            out.push((level, node ^ 1));
            node /= 2;
        }
        Ok(out)
    }

    /// Union of the complement cover of `index`, with the merges it took.
    pub fn complement_union(&self, index: usize) -> Result<(S, u64)> {
        let cover = self.complement_cover(index)?;
        let mut acc = self.levels[0][0].empty_like();
        let mut merges = 0;
        for (level, i) in cover {
            acc.merge_from(&self.levels[level][i])?;
            merges += 1;
        }
        Ok((acc, merges))
    }

    /// Union of all machines.
    pub fn root(&self) -> Result<S> {
        let top = self.levels.last().unwrap();
        top[0].merged(&top[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Estimate {
    pub value: f64,
    /// Sum before clamping at zero.
    pub raw: f64,
    pub merges: u64,
}

/// Estimates the number of ids that occur exactly once across all machines.
///
/// `f1_sketches[j]` holds the ids seen exactly once on machine `j`. Per-machine
/// terms may be negative under sketch noise; only the total is clamped.
pub fn esti_f1<S: DistinctSketch>(tree: &PmTree<S>, f1_sketches: &[S]) -> Result<F1Estimate> {
    if f1_sketches.len() != tree.machines() {
        return Err(Error::Config(format!(
            "{} f1 sketches for {} machines",
            f1_sketches.len(),
            tree.machines()
        )));
    }
    let mut raw = 0.0;
    let mut merges = 0;
    for (j, f1_j) in f1_sketches.iter().enumerate() {
        let (mut others, m) = tree.complement_union(j)?;
        merges += m;
        raw -= others.estimate();
        others.merge_from(f1_j)?;
        merges += 1;
        raw += others.estimate();
    }
    Ok(F1Estimate {
        value: raw.max(0.0),
        raw,
        merges,
    })
}

/// Sample NDV estimate: the union of the two top-level nodes.
pub fn esti_d<S: DistinctSketch>(tree: &PmTree<S>) -> Result<f64> {
    Ok(tree.root()?.estimate())
}

/// `||X||_2^2` of the union frequency vector from the summed Count Sketches.
pub fn esti_l2sq<S>(summaries: &[MachineSummary<S>]) -> Result<f64> {
    let mut iter = summaries.iter().map(|s| {
        s.count_sketch
            .as_ref()
            .ok_or_else(|| Error::Config("summary has no count sketch".into()))
    });
    let mut acc = match iter.next() {
        Some(first) => first?.clone(),
        None => return Ok(0.0),
    };
    for cs in iter {
        acc.merge_from(cs?)?;
    }
    Ok(acc.estimate_l2sq())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleEstimate {
    pub d: f64,
    pub f1: f64,
    pub merges: u64,
}

/// `d` and `f1` of the union of the per-machine resamples.
pub fn esti_resample<S: DistinctSketch>(
    summaries: &[MachineSummary<S>],
) -> Result<ResampleEstimate> {
    let mut ndv = Vec::with_capacity(summaries.len());
    let mut f1 = Vec::with_capacity(summaries.len());
    for s in summaries {
        let r = s
            .resample
            .as_ref()
            .ok_or_else(|| Error::Config("summary has no resample sketches".into()))?;
        ndv.push(r.ndv.clone());
        f1.push(r.f1.clone());
    }
    let tree = PmTree::build(&ndv)?;
    let f1_est = esti_f1(&tree, &f1)?;
    Ok(ResampleEstimate {
        d: esti_d(&tree)?,
        f1: f1_est.value,
        merges: tree.build_merges() + f1_est.merges + 1,
    })
}

/// Communication and merge accounting for one protocol run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommLedger {
    /// Per machine, bytes per role.
    pub per_machine: Vec<Vec<(Role, u64)>>,
    pub scalar_bytes: u64,
    /// Sum over machines of everything sent.
    pub total_bytes: u64,
    /// Bytes the exact baseline would send (all frequency dictionaries).
    pub dict_baseline_bytes: u64,
    pub merges: u64,
}

impl CommLedger {
    pub fn role_total(&self, role: Role) -> u64 {
        self.per_machine
            .iter()
            .flat_map(|m| m.iter())
            .filter(|&&(r, _)| r == role)
            .map(|&(_, b)| b)
            .sum()
    }

    pub fn machine_total(&self, machine: usize) -> u64 {
        self.per_machine[machine]
            .iter()
            .map(|&(_, b)| b)
            .sum::<u64>()
            + SCALAR_BYTES
    }

    pub fn roles(&self) -> BTreeSet<Role> {
        self.per_machine
            .iter()
            .flat_map(|m| m.iter().map(|&(r, _)| r))
            .collect()
    }
}

/// Tallies the bytes of every payload plus the dictionary baseline.
pub fn comm_report(payloads: &[MachinePayload], dicts: &[FreqDict], merges: u64) -> CommLedger {
    let per_machine: Vec<Vec<(Role, u64)>> =
        payloads.iter().map(MachinePayload::role_bytes).collect();
    let scalar_bytes = SCALAR_BYTES * payloads.len() as u64;
    let total_bytes = payloads.iter().map(MachinePayload::total_bytes).sum();
    CommLedger {
        per_machine,
        scalar_bytes,
        total_bytes,
        dict_baseline_bytes: dicts.iter().map(FreqDict::comm_bytes).sum(),
        merges,
    }
}

/// Everything the coordinator derives from the received payloads.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOutput {
    pub d: f64,
    pub f1: f64,
    pub f1_raw: f64,
    pub n: u64,
    pub l2sq: Option<f64>,
    pub resample: Option<ResampleEstimate>,
    /// Merges in tree construction plus the f1 pass.
    pub f1_merges: u64,
    pub total_merges: u64,
}

/// Decodes payloads and runs every estimation step the roles allow.
pub fn run_coordinator<S: DistinctSketch>(payloads: &[MachinePayload]) -> Result<ProtocolOutput> {
    let summaries = payloads
        .iter()
        .map(MachineSummary::<S>::from_payload)
        .collect::<Result<Vec<_>>>()?;
    coordinate(&summaries)
}

/// Runs the coordinator steps on already-decoded summaries.
pub fn coordinate<S: DistinctSketch>(summaries: &[MachineSummary<S>]) -> Result<ProtocolOutput> {
    let ndv: Vec<S> = summaries.iter().map(|s| s.ndv.clone()).collect();
    let f1: Vec<S> = summaries.iter().map(|s| s.f1.clone()).collect();
    let tree = PmTree::build(&ndv)?;
    let f1_est = esti_f1(&tree, &f1)?;
    let d = esti_d(&tree)?;
    let f1_merges = tree.build_merges() + f1_est.merges;
    let mut total_merges = f1_merges + 1;

    let l2sq = if summaries.iter().all(|s| s.count_sketch.is_some()) {
        total_merges += summaries.len().saturating_sub(1) as u64;
        Some(esti_l2sq(summaries)?)
    } else {
        None
    };
    let resample = if summaries.iter().all(|s| s.resample.is_some()) {
        let r = esti_resample(summaries)?;
        total_merges += r.merges;
        Some(r)
    } else {
        None
    };
    Ok(ProtocolOutput {
        d,
        f1: f1_est.value,
        f1_raw: f1_est.raw,
        n: summaries.iter().map(|s| s.n_local).sum(),
        l2sq,
        resample,
        f1_merges,
        total_merges,
    })
}
