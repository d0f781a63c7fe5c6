//! Raw 3D joint sequences to trajectory graphs: similarity normalization
//! estimated from three reference joints on the first frame, temporal
//! chunking into fixed-size node descriptors, dataset loading, and a
//! desk-scale synthetic generator whose classes differ by which joints move
//! and whose correlated noise follows a hidden interaction graph that is not
//! the skeleton graph.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// A raw joint sequence: `frames` is T x n x 3 in meters.
#[derive(Debug, Clone)]
pub struct SkeletonSequence {
    pub frames: Array3<f64>,
    /// Ordered reference joints (p1, p2, p3) used to estimate the rigid motion.
    pub reference: [usize; 3],
    pub label: usize,
}

impl SkeletonSequence {
    pub fn num_frames(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn num_joints(&self) -> usize {
        self.frames.shape()[1]
    }

    fn joint(&self, t: usize, j: usize) -> [f64; 3] {
        [
            self.frames[[t, j, 0]],
            self.frames[[t, j, 1]],
            self.frames[[t, j, 2]],
        ]
    }
}

/// One preprocessed sample: node signals are chunked trajectory descriptors,
/// the adjacency is the handcrafted skeleton graph.
#[derive(Debug, Clone)]
pub struct TrajectoryGraph {
    /// s x n with s = 3 * chunks.
    pub signal: Array2<f64>,
    pub adjacency: Array2<f64>,
    pub label: usize,
}

/// A loaded train/test corpus.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<TrajectoryGraph>,
    pub test: Vec<TrajectoryGraph>,
    /// The handcrafted skeleton adjacency shared by every sample.
    pub adjacency: Array2<f64>,
    pub num_classes: usize,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub reference: [usize; 3],
    pub chunks: usize,
    pub normalize: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            reference: [0, 1, 2],
            chunks: 4,
            normalize: true,
        }
    }
}

// ---------------------------------------------------------------------------
// 3-vector helpers
// ---------------------------------------------------------------------------

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Estimate the similarity transform from frame 0 and apply it to every
/// frame: the midpoint of (p2, p3) moves to the origin, p2 - p3 aligns with
/// +x, the reference triangle becomes coplanar with the x-y plane (p1 on the
/// positive-y side), and ||p2 - p3|| is scaled to 1.
pub fn normalize_sequence(seq: &SkeletonSequence) -> Result<SkeletonSequence> {
    let [r1, r2, r3] = seq.reference;
    let joints = seq.num_joints();
    for &r in &seq.reference {
        if r >= joints {
            return Err(Error::IndexOutOfRange {
                index: r,
                joints,
            });
        }
    }
    let p1 = seq.joint(0, r1);
    let p2 = seq.joint(0, r2);
    let p3 = seq.joint(0, r3);

    let base = sub(p2, p1);
    let side = sub(p3, p1);
    let area = 0.5 * norm(cross(base, side));
    if area <= 1e-9 {
        return Err(Error::DegenerateReference { area });
    }

    let origin = scale3([p2[0] + p3[0], p2[1] + p3[1], p2[2] + p3[2]], 0.5);
    let axis = sub(p2, p3);
    let axis_len = norm(axis);
    let e_x = scale3(axis, 1.0 / axis_len);
    let up = sub(p1, origin);
    let normal = cross(e_x, up);
    let e_z = scale3(normal, 1.0 / norm(normal));
    let e_y = cross(e_z, e_x);
    let gamma = 1.0 / axis_len;

    let (frames, n) = (seq.num_frames(), joints);
    let mut out = Array3::<f64>::zeros((frames, n, 3));
    for t in 0..frames {
        for j in 0..n {
            let p = sub(seq.joint(t, j), origin);
            out[[t, j, 0]] = gamma * dot(e_x, p);
            out[[t, j, 1]] = gamma * dot(e_y, p);
            out[[t, j, 2]] = gamma * dot(e_z, p);
        }
    }
    Ok(SkeletonSequence {
        frames: out,
        reference: seq.reference,
        label: seq.label,
    })
}

// ---------------------------------------------------------------------------
// Temporal chunking
// ---------------------------------------------------------------------------

/// Adjacent-pair summation. Besides the usual accuracy benefit, the reduction
/// commutes exactly with frame duplication: doubling every input produces a
/// bitwise-doubled sum, so chunk means are bitwise invariant when each frame
/// is repeated and T stays divisible by the chunk count.
fn pairwise_sum(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut level: Vec<f64> = values.to_vec();
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        for pair in level.chunks(2) {
            next.push(if pair.len() == 2 {
                pair[0] + pair[1]
            } else {
                pair[0]
            });
        }
        level = next;
    }
    level[0]
}

/// Split the sequence into `chunks` contiguous temporal chunks (chunk c gets
/// frame indices [floor(cT/M), floor((c+1)T/M))) and concatenate per-chunk
/// coordinate means; the descriptor has fixed size s = 3M no matter how many
/// frames the sequence has.
pub fn temporal_chunk(seq: &SkeletonSequence, chunks: usize) -> Result<Array2<f64>> {
    let frames = seq.num_frames();
    if chunks == 0 || frames < chunks {
        return Err(Error::TooShort { frames, chunks });
    }
    let n = seq.num_joints();
    let mut signal = Array2::<f64>::zeros((3 * chunks, n));
    let mut buf = Vec::with_capacity(frames);
    for j in 0..n {
        for c in 0..chunks {
            let start = c * frames / chunks;
            let end = (c + 1) * frames / chunks;
            for d in 0..3 {
                buf.clear();
                buf.extend((start..end).map(|t| seq.frames[[t, j, d]]));
                signal[[3 * c + d, j]] = pairwise_sum(&buf) / (end - start) as f64;
            }
        }
    }
    Ok(signal)
}

/// Assemble a trajectory graph from a normalized sequence and the skeleton
/// edge list. Edges are undirected with unit weight; duplicates are harmless.
pub fn build_graph(
    seq: &SkeletonSequence,
    edges: &[(usize, usize)],
    chunks: usize,
) -> Result<TrajectoryGraph> {
    let n = seq.num_joints();
    let adjacency = edges_to_adjacency(edges, n)?;
    let signal = temporal_chunk(seq, chunks)?;
    Ok(TrajectoryGraph {
        signal,
        adjacency,
        label: seq.label,
    })
}

pub fn edges_to_adjacency(edges: &[(usize, usize)], n: usize) -> Result<Array2<f64>> {
    let mut a = Array2::<f64>::zeros((n, n));
    for &(i, j) in edges {
        if i >= n || j >= n {
            return Err(Error::IndexOutOfRange {
                index: i.max(j),
                joints: n,
            });
        }
        a[[i, j]] = 1.0;
        a[[j, i]] = 1.0;
    }
    Ok(a)
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------
// Sequence file: line 1 "T n", then T lines of 3n reals (x y z per joint).
// Manifest: one line per sequence "relative_path label split".
// Edge list: one line per edge "i j", 0-based.

pub fn write_sequence(path: &Path, frames: &Array3<f64>) -> Result<()> {
    let (t, n, _) = (frames.shape()[0], frames.shape()[1], frames.shape()[2]);
    let mut text = format!("{t} {n}\n");
    for ti in 0..t {
        let mut fields = Vec::with_capacity(3 * n);
        for j in 0..n {
            for d in 0..3 {
                fields.push(format!("{}", frames[[ti, j, d]]));
            }
        }
        text.push_str(&fields.join(" "));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_sequence(path: &Path) -> Result<Array3<f64>> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|_| Error::MissingFile(name.clone()))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        file: name.clone(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty sequence file".into()))?;
    let mut head = header.split_whitespace();
    let t: usize = head
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(1, format!("bad header {header:?}")))?;
    let n: usize = head
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(1, format!("bad header {header:?}")))?;
    let mut frames = Array3::<f64>::zeros((t, n, 3));
    for ti in 0..t {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| parse_err(t + 1, format!("expected {t} frames, found {ti}")))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 * n {
            return Err(parse_err(
                line_no + 1,
                format!("expected {} values, got {}", 3 * n, fields.len()),
            ));
        }
        for j in 0..n {
            for d in 0..3 {
                frames[[ti, j, d]] = fields[3 * j + d]
                    .parse()
                    .map_err(|_| parse_err(line_no + 1, format!("bad value {:?}", fields[3 * j + d])))?;
            }
        }
    }
    Ok(frames)
}

pub fn write_edge_list(path: &Path, edges: &[(usize, usize)]) -> Result<()> {
    let mut text = String::new();
    for &(i, j) in edges {
        text.push_str(&format!("{i} {j}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|_| Error::MissingFile(name.clone()))?;
    let mut edges = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let parse = |field: Option<&str>| -> Result<usize> {
            field
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Parse {
                    file: name.clone(),
                    line: line_no + 1,
                    message: format!("bad edge {trimmed:?}"),
                })
        };
        let i = parse(fields.next())?;
        let j = parse(fields.next())?;
        edges.push((i, j));
    }
    Ok(edges)
}

/// Load a dataset from its manifest. Sequence paths are relative to the
/// manifest's directory, which must also contain `edges.txt`.
pub fn load_dataset(manifest: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let name = manifest.display().to_string();
    let text = std::fs::read_to_string(manifest).map_err(|_| Error::MissingFile(name.clone()))?;
    let dir = manifest.parent().unwrap_or_else(|| Path::new("."));
    let edges = read_edge_list(&dir.join("edges.txt"))?;

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut num_classes = 0usize;
    let mut joints: Option<usize> = None;
    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                file: name.clone(),
                line: line_no + 1,
                message: format!("expected `path label split`, got {trimmed:?}"),
            });
        }
        let label: usize = fields[1].parse().map_err(|_| Error::Parse {
            file: name.clone(),
            line: line_no + 1,
            message: format!("bad label {:?}", fields[1]),
        })?;
        let frames = read_sequence(&dir.join(fields[0]))?;
        let seq = SkeletonSequence {
            frames,
            reference: opts.reference,
            label,
        };
        let seq = if opts.normalize {
            normalize_sequence(&seq)?
        } else {
            seq
        };
        joints.get_or_insert(seq.num_joints());
        let graph = build_graph(&seq, &edges, opts.chunks)?;
        num_classes = num_classes.max(label + 1);
        match fields[2] {
            "train" => train.push(graph),
            "test" => test.push(graph),
            other => {
                return Err(Error::Parse {
                    file: name.clone(),
                    line: line_no + 1,
                    message: format!("split must be train or test, got {other:?}"),
                })
            }
        }
    }
    let n = joints.ok_or_else(|| Error::Parse {
        file: name.clone(),
        line: 1,
        message: "manifest lists no sequences".into(),
    })?;
    let adjacency = edges_to_adjacency(&edges, n)?;
    Ok(Dataset {
        train,
        test,
        adjacency,
        num_classes,
    })
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

/// Knobs for the synthetic corpus. The first three joints form a rigid
/// reference triangle; the remaining joints are split into one oscillating
/// group per class, and a hidden within-group matching carries strong
/// antisymmetric noise (+r on one endpoint, -r on the other), so connectivity
/// that respects the matching can cancel it while the chain skeleton cannot.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub joints: usize,
    pub frames: usize,
    pub seed: u64,
    pub signal_amp: f64,
    pub noise_amp: f64,
    pub jitter_amp: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 2,
            train_per_class: 100,
            test_per_class: 50,
            joints: 15,
            frames: 32,
            seed: 0,
            signal_amp: 0.35,
            noise_amp: 0.8,
            jitter_amp: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub sequences: Vec<(SkeletonSequence, Split)>,
    pub skeleton_edges: Vec<(usize, usize)>,
    pub hidden_edges: Vec<(usize, usize)>,
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let len = norm(v);
        if len > 1e-6 {
            return scale3(v, 1.0 / len);
        }
    }
}

/// Uniform random rotation from a normalized quaternion.
fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let len = (q.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let [w, x, y, z] = [q[0] / len, q[1] / len, q[2] / len, q[3] / len];
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

fn apply_rotation(r: &[[f64; 3]; 3], p: [f64; 3]) -> [f64; 3] {
    [dot(r[0], p), dot(r[1], p), dot(r[2], p)]
}

/// The class-c oscillating joints: group c of the free joints (index >= 3).
fn class_group(spec: &SynthSpec, class: usize) -> std::ops::Range<usize> {
    let free = spec.joints - 3;
    let group = free / spec.classes;
    let start = 3 + class * group;
    start..start + group
}

fn hidden_matching(spec: &SynthSpec) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for c in 0..spec.classes {
        let g = class_group(spec, c);
        let half = g.len() / 2;
        for i in 0..half {
            edges.push((g.start + i, g.start + half + i));
        }
    }
    edges
}

/// Generate the corpus. Deterministic in `spec.seed`.
pub fn synth_generate(spec: &SynthSpec) -> SynthDataset {
    assert!(spec.joints >= 5, "need a reference triangle plus free joints");
    assert!(spec.classes >= 2);
    assert!(spec.joints - 3 >= 2 * spec.classes);

    let n = spec.joints;
    let t_len = spec.frames;
    let mut world = ChaCha8Rng::seed_from_u64(spec.seed);

    // shared rest pose; the reference triangle is the normalization fixed point
    let mut rest = vec![[0.0f64; 3]; n];
    rest[0] = [0.0, 0.8, 0.0];
    rest[1] = [0.5, 0.0, 0.0];
    rest[2] = [-0.5, 0.0, 0.0];
    for joint in rest.iter_mut().skip(3) {
        *joint = [
            world.random_range(-1.0..1.0),
            world.random_range(-1.0..1.0),
            world.random_range(-1.0..1.0),
        ];
    }
    // The i-th joint of every class group moves along the same direction, so
    // the node-summed motion is identical across classes and the class is
    // carried purely by which nodes move.
    let group_len = class_group(spec, 0).len();
    let base_directions: Vec<[f64; 3]> = (0..group_len).map(|_| random_unit(&mut world)).collect();
    let mut directions: Vec<[f64; 3]> = vec![[1.0, 0.0, 0.0]; n];
    for c in 0..spec.classes {
        for (i, j) in class_group(spec, c).enumerate() {
            directions[j] = base_directions[i];
        }
    }

    let skeleton_edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    let hidden_edges = hidden_matching(spec);

    let per_class = spec.train_per_class + spec.test_per_class;
    let mut sequences = Vec::with_capacity(spec.classes * per_class);
    for round in 0..per_class {
        for class in 0..spec.classes {
            let idx = (round * spec.classes + class) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(
                spec.seed ^ 0x9e3779b97f4a7c15u64.wrapping_mul(idx + 1),
            );
            let mut frames = Array3::<f64>::zeros((t_len, n, 3));

            // The class signal carries a random sign per sequence, so the
            // class-conditional mean of every chunk feature is zero and no
            // linear functional of raw features separates the classes; what
            // distinguishes them is which nodes carry coherent oscillation
            // energy.
            let signal_sign: f64 = if rng.random_bool(0.5) { 1.0 } else { -1.0 };

            // Per-sequence noise on the hidden matching, antisymmetric across
            // each edge and aimed along each endpoint's own signal direction
            // with the signal's own waveform: every informative channel is
            // contaminated, and only combinations that respect the matching
            // recover a clean signal.
            let noise: Vec<f64> = hidden_edges
                .iter()
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * spec.noise_amp
                })
                .collect();

            let group = class_group(spec, class);
            for t in 0..t_len {
                let phase = std::f64::consts::TAU * t as f64 / t_len as f64;
                let wave = signal_sign * phase.sin();
                for j in 0..n {
                    let mut p = rest[j];
                    if group.contains(&j) {
                        let d = directions[j];
                        p = [
                            p[0] + spec.signal_amp * wave * d[0],
                            p[1] + spec.signal_amp * wave * d[1],
                            p[2] + spec.signal_amp * wave * d[2],
                        ];
                    }
                    if j >= 3 {
                        for coord in &mut p {
                            let jitter: f64 = StandardNormal.sample(&mut rng);
                            *coord += spec.jitter_amp * jitter;
                        }
                    }
                    for d in 0..3 {
                        frames[[t, j, d]] = p[d];
                    }
                }
                for (e, &(u, v)) in hidden_edges.iter().enumerate() {
                    let r = noise[e] * phase.sin();
                    for d in 0..3 {
                        frames[[t, u, d]] += r * directions[u][d];
                        frames[[t, v, d]] -= r * directions[v][d];
                    }
                }
            }

            // scramble with a random similarity; normalization must undo it
            let rot = random_rotation(&mut rng);
            let shift = [
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ];
            let zoom: f64 = rng.random_range(0.5..2.0);
            for t in 0..t_len {
                for j in 0..n {
                    let p = [frames[[t, j, 0]], frames[[t, j, 1]], frames[[t, j, 2]]];
                    let q = apply_rotation(&rot, p);
                    for d in 0..3 {
                        frames[[t, j, d]] = zoom * q[d] + shift[d];
                    }
                }
            }

            let split = if round < spec.train_per_class {
                Split::Train
            } else {
                Split::Test
            };
            sequences.push((
                SkeletonSequence {
                    frames,
                    reference: [0, 1, 2],
                    label: class,
                },
                split,
            ));
        }
    }

    SynthDataset {
        sequences,
        skeleton_edges,
        hidden_edges,
    }
}

/// Preprocess an in-memory synthetic corpus into a training dataset.
pub fn synth_to_dataset(synth: &SynthDataset, opts: &LoadOptions) -> Result<Dataset> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut num_classes = 0;
    for (seq, split) in &synth.sequences {
        let seq = if opts.normalize {
            normalize_sequence(seq)?
        } else {
            seq.clone()
        };
        let graph = build_graph(&seq, &synth.skeleton_edges, opts.chunks)?;
        num_classes = num_classes.max(graph.label + 1);
        match split {
            Split::Train => train.push(graph),
            Split::Test => test.push(graph),
        }
    }
    let n = synth.sequences[0].0.num_joints();
    Ok(Dataset {
        train,
        test,
        adjacency: edges_to_adjacency(&synth.skeleton_edges, n)?,
        num_classes,
    })
}

/// Materialize a synthetic corpus to disk in the manifest layout, including
/// the generator's hidden interaction graph as `hidden_edges.txt`.
pub fn write_dataset(dir: &Path, synth: &SynthDataset) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut manifest = String::new();
    for (idx, (seq, split)) in synth.sequences.iter().enumerate() {
        let file = format!("seq_{idx:04}.txt");
        write_sequence(&dir.join(&file), &seq.frames)?;
        let split = match split {
            Split::Train => "train",
            Split::Test => "test",
        };
        manifest.push_str(&format!("{file} {} {split}\n", seq.label));
    }
    let manifest_path = dir.join("manifest.txt");
    std::fs::write(&manifest_path, manifest)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    write_edge_list(&dir.join("edges.txt"), &synth.skeleton_edges)?;
    write_edge_list(&dir.join("hidden_edges.txt"), &synth.hidden_edges)?;
    Ok(manifest_path)
}
