//! Seeded synthetic profiles.
//!
//! [`generate`] produces realistically shaped profiles: a fixed roster of
//! primitive families whose relative speed and footprint follow the usual
//! pattern (patch-matrix lowering is fast and memory hungry, direct loops are
//! slow and lean), scaled per layer and perturbed by seeded noise.
//! [`random_instance`] produces tiny integer instances for exhaustive checks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{
    DataLayout, EdgeSpec, LayerProfile, LayoutTransform, NetworkProfile, PrimitiveCandidate,
    SCHEMA_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Chain,
    /// Inception-style modules: a source layer fans out into a one-layer and a
    /// two-layer branch that meet again at a join layer.
    ForkJoin,
}

impl std::str::FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chain" => Ok(Topology::Chain),
            "fork-join" => Ok(Topology::ForkJoin),
            other => Err(format!(
                "unknown topology '{other}' (expected chain or fork-join)"
            )),
        }
    }
}

/// Edges (by layer index) for `m` layers in topological order.
pub fn topology_edges(m: usize, topology: Topology) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    match topology {
        Topology::Chain => {
            for i in 1..m {
                edges.push((i - 1, i));
            }
        }
        Topology::ForkJoin => {
            if m == 0 {
                return edges;
            }
            let mut src = 0;
            let mut next = 1;
            while next < m {
                let left = m - next;
                match left {
                    1 => {
                        edges.push((src, next));
                        next += 1;
                    }
                    2 => {
                        edges.extend([(src, next), (src, next + 1)]);
                        next += 2;
                    }
                    3 => {
                        let (b, c, j) = (next, next + 1, next + 2);
                        edges.extend([(src, b), (src, c), (b, j), (c, j)]);
                        src = j;
                        next += 3;
                    }
                    _ => {
                        let (b, c, d, j) = (next, next + 1, next + 2, next + 3);
                        edges.extend([(src, b), (src, c), (c, d), (b, j), (d, j)]);
                        src = j;
                        next += 4;
                    }
                }
            }
        }
    }
    edges
}

fn layouts() -> [DataLayout; 2] {
    [DataLayout::new("CHW"), DataLayout::new("HWC")]
}

/// Small random instance with integer costs in `1..=50` and between one and
/// `max_candidates` candidates per layer. Transition matrices are derived
/// from a random layout transform table.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    layers: usize,
    max_candidates: usize,
    topology: Topology,
) -> NetworkProfile {
    let [chw, hwc] = layouts();
    let mut out = Vec::with_capacity(layers);
    let mut transforms = Vec::new();
    for i in 0..layers {
        let n = rng.gen_range(1..=max_candidates.max(1));
        let candidates = (0..n)
            .map(|j| {
                let pick = |rng: &mut R| {
                    if rng.gen_bool(0.5) {
                        chw.clone()
                    } else {
                        hwc.clone()
                    }
                };
                let input = pick(rng);
                let output = pick(rng);
                PrimitiveCandidate {
                    id: format!("c{j}"),
                    time_us: rng.gen_range(1..=50),
                    memory_bytes: rng.gen_range(1..=50),
                    input_layout: input,
                    output_layout: output,
                    buffer_breakdown: None,
                }
            })
            .collect();
        let layer_id = format!("L{i}");
        for (from, to) in [(&chw, &hwc), (&hwc, &chw)] {
            transforms.push(LayoutTransform {
                from_layout: from.clone(),
                to_layout: to.clone(),
                layer: layer_id.clone(),
                cost_us: rng.gen_range(1..=20),
            });
        }
        out.push(LayerProfile {
            layer_id,
            candidates,
        });
    }
    let edges = topology_edges(layers, topology)
        .into_iter()
        .map(|(a, b)| EdgeSpec {
            from: out[a].layer_id.clone(),
            to: out[b].layer_id.clone(),
            matrix: None,
        })
        .collect();
    NetworkProfile {
        schema: SCHEMA_VERSION,
        name: format!("random-{layers}x{max_candidates}"),
        layers: out,
        edges,
        layout_transforms: transforms,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub layers: usize,
    pub candidates: usize,
    pub seed: u64,
    pub topology: Topology,
}

struct Family {
    name: &'static str,
    time: f64,
    /// Footprint relative to the layer's direct-convolution footprint, for a
    /// 3x3 kernel. Lowering-based families grow with the kernel area.
    memory: f64,
    lowered: bool,
    input: usize,
    output: usize,
}

const CHW: usize = 0;
const HWC: usize = 1;

const FAMILIES: &[Family] = &[
    Family {
        name: "direct-sum2d",
        time: 5.0,
        memory: 1.0,
        lowered: false,
        input: CHW,
        output: CHW,
    },
    Family {
        name: "im2col-copy-self-ab-ki",
        time: 1.0,
        memory: 7.0,
        lowered: true,
        input: CHW,
        output: CHW,
    },
    Family {
        name: "im2row-copy-short-ab-ik",
        time: 1.02,
        memory: 7.0,
        lowered: true,
        input: HWC,
        output: HWC,
    },
    Family {
        name: "winograd-2x2-3x3",
        time: 0.95,
        memory: 5.0,
        lowered: false,
        input: CHW,
        output: CHW,
    },
    Family {
        name: "kn2row-as",
        time: 1.06,
        memory: 1.9,
        lowered: false,
        input: CHW,
        output: CHW,
    },
    Family {
        name: "im2col-scan-ab-ki",
        time: 1.12,
        memory: 4.5,
        lowered: true,
        input: CHW,
        output: CHW,
    },
    Family {
        name: "kn2col",
        time: 1.1,
        memory: 2.1,
        lowered: false,
        input: HWC,
        output: HWC,
    },
    Family {
        name: "mec-col",
        time: 1.25,
        memory: 1.6,
        lowered: false,
        input: CHW,
        output: HWC,
    },
    Family {
        name: "winograd-4x4-3x3",
        time: 0.92,
        memory: 6.0,
        lowered: false,
        input: HWC,
        output: HWC,
    },
    Family {
        name: "conv-1x1-gemm-ab-ik",
        time: 1.3,
        memory: 1.3,
        lowered: false,
        input: HWC,
        output: CHW,
    },
];

/// Realistically shaped synthetic profile. Identical configs yield identical
/// profiles.
pub fn generate(config: &SynthConfig) -> NetworkProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let layout = layouts();
    let n = config.candidates.max(1);

    // Candidate roster shared by every layer so uniform selections exist.
    struct Variant {
        id: String,
        time: f64,
        memory: f64,
        lowered: bool,
        input: usize,
        output: usize,
    }
    let roster: Vec<Variant> = (0..n)
        .map(|j| {
            let base = &FAMILIES[j % FAMILIES.len()];
            let round = j / FAMILIES.len();
            if round == 0 {
                Variant {
                    id: base.name.to_owned(),
                    time: base.time,
                    memory: base.memory,
                    lowered: base.lowered,
                    input: base.input,
                    output: base.output,
                }
            } else {
                Variant {
                    id: format!("{}-v{round}", base.name),
                    time: base.time * rng.gen_range(0.95..1.3),
                    memory: base.memory * rng.gen_range(0.8..1.2),
                    lowered: base.lowered,
                    input: rng.gen_range(0..2),
                    output: rng.gen_range(0..2),
                }
            }
        })
        .collect();

    let mut layers = Vec::with_capacity(config.layers);
    let mut transforms = Vec::new();
    for i in 0..config.layers {
        let layer_id = format!("conv{}", i + 1);
        let kernel: u32 = [1, 3, 3, 3, 5][rng.gen_range(0..5)];
        let area = f64::from(kernel * kernel) / 9.0;
        // Direct-convolution time and footprint of this layer.
        let base_time = rng.gen_range(400.0..6000.0);
        let base_memory = rng.gen_range(64.0 * 1024.0..1536.0 * 1024.0);
        let candidates = roster
            .iter()
            .map(|v| {
                let mem_factor = if v.lowered {
                    1.0 + (v.memory - 1.0) * area
                } else {
                    v.memory
                };
                let time = base_time * v.time * rng.gen_range(0.9..1.1);
                let memory = base_memory * mem_factor * rng.gen_range(0.95..1.05);
                PrimitiveCandidate {
                    id: v.id.clone(),
                    time_us: time.round().max(1.0) as u64,
                    memory_bytes: memory.round().max(1.0) as u64,
                    input_layout: layout[v.input].clone(),
                    output_layout: layout[v.output].clone(),
                    buffer_breakdown: None,
                }
            })
            .collect();
        for (a, b) in [(CHW, HWC), (HWC, CHW)] {
            transforms.push(LayoutTransform {
                from_layout: layout[a].clone(),
                to_layout: layout[b].clone(),
                layer: layer_id.clone(),
                cost_us: (base_time * rng.gen_range(0.03..0.08)).round() as u64,
            });
        }
        layers.push(LayerProfile {
            layer_id,
            candidates,
        });
    }

    let edges = topology_edges(config.layers, config.topology)
        .into_iter()
        .map(|(a, b)| EdgeSpec {
            from: layers[a].layer_id.clone(),
            to: layers[b].layer_id.clone(),
            matrix: None,
        })
        .collect();
    let topo = match config.topology {
        Topology::Chain => "chain",
        Topology::ForkJoin => "fork-join",
    };
    NetworkProfile {
        schema: SCHEMA_VERSION,
        name: format!(
            "synthetic-{topo}-{}x{}-seed{}",
            config.layers, n, config.seed
        ),
        layers,
        edges,
        layout_transforms: transforms,
    }
}
