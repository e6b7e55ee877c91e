//! Handover signaling over the inter-satellite mesh: the +Grid link graph,
//! deterministic shortest-delay routing, and the message sequences of the
//! four handover schemes. The parallel scheme overlaps its access and
//! context legs and a store-and-fire slot on the target joins them; the
//! three serial baselines differ only in where the context anchor sits.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orbit::{ConstellationConfig, SatId, SatelliteState, Vec3};
use crate::scheduling::UeId;

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("node {0:?} is not in the link graph")]
    UnknownNode(NodeId),
    #[error("no route from {from:?} to {to:?}")]
    NoRoute { from: NodeId, to: NodeId },
    #[error("scheme needs a ground anchor but none is configured")]
    NoAnchor,
}

/// Fixed timing and sizing constants of the signaling model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConstants {
    /// Store-and-forward cost charged per traversed link.
    pub per_hop_processing_s: f64,
    /// Uplink synchronization after the UE reaches the target satellite.
    pub attach_sync_s: f64,
    /// Size of one signaling or schedule message on the wire.
    pub message_size_bytes: u64,
}

impl Default for ProtocolConstants {
    fn default() -> Self {
        ProtocolConstants {
            per_hop_processing_s: 1e-3,
            attach_sync_s: 3e-3,
            message_size_bytes: 500,
        }
    }
}

/// The four handover schemes under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Access and context transfer run concurrently; store-and-fire joins.
    Parallel,
    /// Everything serial through the core site.
    Ntn,
    /// Context anchored at the nearest ground station.
    NtnGs,
    /// Context moves satellite-to-satellite; only the path switch reaches
    /// the core.
    NtnSmn,
}

impl Scheme {
    pub fn all() -> [Scheme; 4] {
        [Scheme::Parallel, Scheme::Ntn, Scheme::NtnGs, Scheme::NtnSmn]
    }

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Parallel => "parallel",
            Scheme::Ntn => "ntn",
            Scheme::NtnGs => "ntn-gs",
            Scheme::NtnSmn => "ntn-smn",
        }
    }
}

/// Graph node: a satellite or a ground site (station or core).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Sat(SatId),
    Site(u32),
}

#[derive(Debug, Clone)]
struct NodeInfo {
    position_m: Vec3,
    /// Neighbor and one-way propagation delay in seconds.
    edges: Vec<(NodeId, f64)>,
}

/// Snapshot of the signaling topology at one instant: +Grid ISLs between
/// satellites plus one feeder link from every ground site to its highest
/// visible satellite.
#[derive(Debug, Clone)]
pub struct IslGraph {
    pub time_s: f64,
    nodes: BTreeMap<NodeId, NodeInfo>,
}

fn propagation_s(a: Vec3, b: Vec3) -> f64 {
    a.distance(b) / SPEED_OF_LIGHT_M_S
}

/// Builds the +Grid mesh: each satellite links to its slot neighbors in
/// the same plane and to the same slot in the neighboring planes, rings
/// wrapping in both directions. Degenerate shells (one or two planes, or
/// two slots) simply drop the duplicate neighbors.
pub fn build_isl_graph(
    config: &ConstellationConfig,
    snapshot: &[SatelliteState],
    sites: &[(u32, Vec3)],
    min_site_elevation_deg: f64,
    t: f64,
) -> IslGraph {
    let planes = config.planes;
    let slots = config.sats_per_plane;
    let mut nodes: BTreeMap<NodeId, NodeInfo> = BTreeMap::new();

    for state in snapshot {
        let plane = config.plane_of(state.id);
        let slot = config.slot_of(state.id);
        let mut neighbors = Vec::new();
        if slots > 1 {
            neighbors.push(config.sat_id(plane, (slot + 1) % slots));
            neighbors.push(config.sat_id(plane, (slot + slots - 1) % slots));
        }
        if planes > 1 {
            // Open arcs leave the plane ring unclosed: the end planes have
            // one cross-plane neighbor instead of two.
            if plane + 1 < planes || config.plane_ring_closed() {
                neighbors.push(config.sat_id((plane + 1) % planes, slot));
            }
            if plane > 0 || config.plane_ring_closed() {
                neighbors.push(config.sat_id((plane + planes - 1) % planes, slot));
            }
        }
        neighbors.sort_unstable();
        neighbors.dedup();
        neighbors.retain(|n| *n != state.id);

        let edges = neighbors
            .into_iter()
            .map(|n| {
                let other = &snapshot[n.0 as usize];
                (NodeId::Sat(n), propagation_s(state.position_m, other.position_m))
            })
            .collect();
        nodes.insert(NodeId::Sat(state.id), NodeInfo { position_m: state.position_m, edges });
    }

    for &(site_id, position_m) in sites {
        let mut best: Option<(SatId, f64, f64)> = None;
        for state in snapshot {
            let (el, range) =
                crate::orbit::elevation_and_range(position_m, state.position_m);
            if el < min_site_elevation_deg {
                continue;
            }
            let better = match best {
                None => true,
                Some((b_id, b_el, _)) => el > b_el || (el == b_el && state.id < b_id),
            };
            if better {
                best = Some((state.id, el, range));
            }
        }
        let mut edges = Vec::new();
        if let Some((sat, _, range)) = best {
            let delay = range / SPEED_OF_LIGHT_M_S;
            edges.push((NodeId::Sat(sat), delay));
            if let Some(info) = nodes.get_mut(&NodeId::Sat(sat)) {
                info.edges.push((NodeId::Site(site_id), delay));
            }
        }
        nodes.insert(NodeId::Site(site_id), NodeInfo { position_m, edges });
    }

    IslGraph { time_s: t, nodes }
}

impl IslGraph {
    pub fn contains(&self, node: NodeId) -> bool {
        self.nodes.contains_key(&node)
    }

    pub fn position_of(&self, node: NodeId) -> Option<Vec3> {
        self.nodes.get(&node).map(|n| n.position_m)
    }

    pub fn degree_of(&self, node: NodeId) -> Option<usize> {
        self.nodes.get(&node).map(|n| n.edges.len())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Satellite node nearest to a point, by straight-line distance; ties
    /// go to the lower id.
    pub fn nearest_sat_to(&self, point: Vec3) -> Option<SatId> {
        let mut best: Option<(SatId, f64)> = None;
        for (node, info) in &self.nodes {
            let NodeId::Sat(sat) = node else { continue };
            let d = info.position_m.distance(point);
            let better = match best {
                None => true,
                Some((b_sat, b_d)) => d < b_d || (d == b_d && *sat < b_sat),
            };
            if better {
                best = Some((*sat, d));
            }
        }
        best.map(|(s, _)| s)
    }
}

/// Cost of one routed message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteCost {
    pub propagation_s: f64,
    pub hops: u32,
}

impl RouteCost {
    pub fn total_s(&self, constants: &ProtocolConstants) -> f64 {
        self.propagation_s + self.hops as f64 * constants.per_hop_processing_s
    }
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    cost: f64,
    node: NodeId,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cost.total_cmp(&other.cost).is_eq() && self.node == other.node
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.cost.total_cmp(&other.cost).then_with(|| self.node.cmp(&other.node))
    }
}

/// Least-delay route under `propagation + hops * per_hop_processing`,
/// by Dijkstra with a deterministic tie order.
pub fn route_delay(
    graph: &IslGraph,
    from: NodeId,
    to: NodeId,
    constants: &ProtocolConstants,
) -> Result<RouteCost, ProtocolError> {
    if !graph.contains(from) {
        return Err(ProtocolError::UnknownNode(from));
    }
    if !graph.contains(to) {
        return Err(ProtocolError::UnknownNode(to));
    }
    if from == to {
        return Ok(RouteCost { propagation_s: 0.0, hops: 0 });
    }

    let mut best: BTreeMap<NodeId, (f64, f64, u32)> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    best.insert(from, (0.0, 0.0, 0));
    heap.push(Reverse(HeapEntry { cost: 0.0, node: from }));

    while let Some(Reverse(entry)) = heap.pop() {
        let (cost, prop, hops) = best[&entry.node];
        if entry.cost.total_cmp(&cost).is_gt() {
            continue; // stale heap entry
        }
        if entry.node == to {
            return Ok(RouteCost { propagation_s: prop, hops });
        }
        for &(next, edge_prop) in &graph.nodes[&entry.node].edges {
            let cand = cost + edge_prop + constants.per_hop_processing_s;
            let improves = match best.get(&next) {
                None => true,
                Some((c, _, _)) => cand.total_cmp(c).is_lt(),
            };
            if improves {
                best.insert(next, (cand, prop + edge_prop, hops + 1));
                heap.push(Reverse(HeapEntry { cost: cand, node: next }));
            }
        }
    }
    Err(ProtocolError::NoRoute { from, to })
}

// ===== Message sequences =====

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageKind {
    MeasurementReport,
    HandoverRequest,
    HandoverAck,
    RrcReconfiguration,
    RrcComplete,
    SnStatusTransfer,
    PathSwitchRequest,
    PathSwitchAck,
    ContextRelease,
}

/// Endpoint of one signaling leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Endpoint {
    Ue(UeId),
    Node(NodeId),
}

/// One transmitted message with its modeled one-way delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leg {
    pub kind: MessageKind,
    pub from: Endpoint,
    pub to: Endpoint,
    pub delay_s: f64,
}

/// Which SSF input reached the target first, and how long the slot waited
/// for its partner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsfOutcome {
    pub first: MessageKind,
    pub wait_s: f64,
}

/// Timing of one executed handover. `prep_s` covers signaling before the
/// UE detaches and does not interrupt service; `interruption_s` runs from
/// detach to restored service on the target.
#[derive(Debug, Clone, PartialEq)]
pub struct HandoverOutcome {
    pub scheme: Scheme,
    pub ue: UeId,
    pub source: SatId,
    pub target: SatId,
    pub prep_s: f64,
    pub interruption_s: f64,
    /// Detach-to-attach time on the access side.
    pub access_side_s: f64,
    /// Context transfer time on the network side.
    pub core_side_s: f64,
    pub ssf: Option<SsfOutcome>,
    pub legs: Vec<Leg>,
}

/// Inputs of one handover execution. Positions come from the same
/// snapshot the graph was built from.
#[derive(Debug, Clone, Copy)]
pub struct HandoverContext<'a> {
    pub graph: &'a IslGraph,
    pub constants: &'a ProtocolConstants,
    pub ue: UeId,
    pub ue_position_m: Vec3,
    pub source: SatId,
    pub target: SatId,
    pub core_site: u32,
    pub ground_sites: &'a [u32],
}

impl HandoverContext<'_> {
    fn sat_position(&self, sat: SatId) -> Result<Vec3, ProtocolError> {
        self.graph.position_of(NodeId::Sat(sat)).ok_or(ProtocolError::UnknownNode(NodeId::Sat(sat)))
    }

    /// Direct UE-to-satellite service link: propagation plus one
    /// processing stop at the receiver.
    fn ue_leg_s(&self, sat: SatId) -> Result<f64, ProtocolError> {
        let pos = self.sat_position(sat)?;
        Ok(propagation_s(self.ue_position_m, pos) + self.constants.per_hop_processing_s)
    }

    fn routed_s(&self, from: NodeId, to: NodeId) -> Result<f64, ProtocolError> {
        Ok(route_delay(self.graph, from, to, self.constants)?.total_s(self.constants))
    }

    /// Ground station nearest to the source satellite, straight-line.
    fn nearest_ground_station(&self) -> Result<u32, ProtocolError> {
        let src = self.sat_position(self.source)?;
        let mut best: Option<(u32, f64)> = None;
        for &site in self.ground_sites {
            let Some(pos) = self.graph.position_of(NodeId::Site(site)) else { continue };
            let d = pos.distance(src);
            let better = match best {
                None => true,
                Some((b_site, b_d)) => d < b_d || (d == b_d && site < b_site),
            };
            if better {
                best = Some((site, d));
            }
        }
        best.map(|(s, _)| s).ok_or(ProtocolError::NoAnchor)
    }
}

/// Runs one handover under the given scheme and returns its timing.
pub fn execute_handover(
    scheme: Scheme,
    ctx: &HandoverContext<'_>,
) -> Result<HandoverOutcome, ProtocolError> {
    match scheme {
        Scheme::Parallel => execute_parallel(ctx),
        Scheme::Ntn => {
            let anchor = NodeId::Site(ctx.core_site);
            execute_serial(scheme, ctx, anchor)
        }
        Scheme::NtnGs => {
            let anchor = NodeId::Site(ctx.nearest_ground_station()?);
            execute_serial(scheme, ctx, anchor)
        }
        Scheme::NtnSmn => {
            // Satellite-held context: the source holds the mobility state,
            // so both the transfer and the path switch stay on the mesh.
            execute_serial(scheme, ctx, NodeId::Sat(ctx.source))
        }
    }
}

/// Parallel scheme: the trigger fires from the precomputed schedule, so
/// there is no preparation exchange. The access side reconfigures the UE
/// while the context crosses the mesh; the target's store-and-fire slot
/// holds whichever finishes first.
fn execute_parallel(ctx: &HandoverContext<'_>) -> Result<HandoverOutcome, ProtocolError> {
    let src = NodeId::Sat(ctx.source);
    let tgt = NodeId::Sat(ctx.target);
    let rrc_down = ctx.ue_leg_s(ctx.source)?;
    let rrc_up = ctx.ue_leg_s(ctx.target)?;
    let access = rrc_down + rrc_up + ctx.constants.attach_sync_s;
    let sn = ctx.routed_s(src, tgt)?;
    let interruption = access.max(sn);

    let rrc_arrival = rrc_down + rrc_up;
    let ssf = if rrc_arrival <= sn {
        SsfOutcome { first: MessageKind::RrcComplete, wait_s: sn - rrc_arrival }
    } else {
        SsfOutcome { first: MessageKind::SnStatusTransfer, wait_s: rrc_arrival - sn }
    };

    let legs = vec![
        Leg {
            kind: MessageKind::RrcReconfiguration,
            from: Endpoint::Node(src),
            to: Endpoint::Ue(ctx.ue),
            delay_s: rrc_down,
        },
        Leg {
            kind: MessageKind::RrcComplete,
            from: Endpoint::Ue(ctx.ue),
            to: Endpoint::Node(tgt),
            delay_s: rrc_up,
        },
        Leg {
            kind: MessageKind::SnStatusTransfer,
            from: Endpoint::Node(src),
            to: Endpoint::Node(tgt),
            delay_s: sn,
        },
        Leg {
            kind: MessageKind::ContextRelease,
            from: Endpoint::Node(tgt),
            to: Endpoint::Node(src),
            delay_s: ctx.routed_s(tgt, src)?,
        },
    ];

    Ok(HandoverOutcome {
        scheme: Scheme::Parallel,
        ue: ctx.ue,
        source: ctx.source,
        target: ctx.target,
        prep_s: 0.0,
        interruption_s: interruption,
        access_side_s: access,
        core_side_s: sn,
        ssf: Some(ssf),
        legs,
    })
}

/// Serial baseline: measurement, anchored preparation, detach, anchored
/// context transfer, path switch, then attach. The plain scheme switches
/// at the distant core; the ground-station and satellite variants switch
/// at their nearer anchor.
fn execute_serial(
    scheme: Scheme,
    ctx: &HandoverContext<'_>,
    anchor: NodeId,
) -> Result<HandoverOutcome, ProtocolError> {
    let src = NodeId::Sat(ctx.source);
    let tgt = NodeId::Sat(ctx.target);
    let switch_node = match scheme {
        Scheme::NtnGs | Scheme::NtnSmn => anchor,
        _ => NodeId::Site(ctx.core_site),
    };

    let measurement = ctx.ue_leg_s(ctx.source)?;
    let req = ctx.routed_s(src, anchor)?;
    let ack = ctx.routed_s(anchor, src)?;
    let prep = measurement + req + ack;

    let rrc_down = ctx.ue_leg_s(ctx.source)?;
    let rrc_up = ctx.ue_leg_s(ctx.target)?;
    let sn = ctx.routed_s(src, anchor)? + ctx.routed_s(anchor, tgt)?;
    let ps_req = ctx.routed_s(tgt, switch_node)?;
    let ps_ack = ctx.routed_s(switch_node, tgt)?;
    let access = rrc_down + rrc_up + ctx.constants.attach_sync_s;
    let core = sn + ps_req + ps_ack;
    let interruption = access + core;

    let legs = vec![
        Leg {
            kind: MessageKind::MeasurementReport,
            from: Endpoint::Ue(ctx.ue),
            to: Endpoint::Node(src),
            delay_s: measurement,
        },
        Leg { kind: MessageKind::HandoverRequest, from: Endpoint::Node(src), to: Endpoint::Node(anchor), delay_s: req },
        Leg { kind: MessageKind::HandoverAck, from: Endpoint::Node(anchor), to: Endpoint::Node(src), delay_s: ack },
        Leg {
            kind: MessageKind::RrcReconfiguration,
            from: Endpoint::Node(src),
            to: Endpoint::Ue(ctx.ue),
            delay_s: rrc_down,
        },
        Leg { kind: MessageKind::RrcComplete, from: Endpoint::Ue(ctx.ue), to: Endpoint::Node(tgt), delay_s: rrc_up },
        Leg { kind: MessageKind::SnStatusTransfer, from: Endpoint::Node(src), to: Endpoint::Node(tgt), delay_s: sn },
        Leg {
            kind: MessageKind::PathSwitchRequest,
            from: Endpoint::Node(tgt),
            to: Endpoint::Node(switch_node),
            delay_s: ps_req,
        },
        Leg {
            kind: MessageKind::PathSwitchAck,
            from: Endpoint::Node(switch_node),
            to: Endpoint::Node(tgt),
            delay_s: ps_ack,
        },
        Leg {
            kind: MessageKind::ContextRelease,
            from: Endpoint::Node(tgt),
            to: Endpoint::Node(src),
            delay_s: ctx.routed_s(tgt, src)?,
        },
    ];

    Ok(HandoverOutcome {
        scheme,
        ue: ctx.ue,
        source: ctx.source,
        target: ctx.target,
        prep_s: prep,
        interruption_s: interruption,
        access_side_s: access,
        core_side_s: core,
        ssf: None,
        legs,
    })
}

/// Running store-and-fire accounting across a run. Every stored context
/// either fires or is still pending; nothing is lost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SsfCounters {
    pub stored: u64,
    pub fired: u64,
    pub fallbacks: u64,
}

impl SsfCounters {
    pub fn record(&mut self, outcome: &HandoverOutcome) {
        if outcome.ssf.is_some() {
            self.stored += 1;
            self.fired += 1;
        }
    }

    pub fn record_fallback(&mut self) {
        self.fallbacks += 1;
    }

    pub fn pending(&self) -> u64 {
        self.stored - self.fired
    }

    pub fn consistent(&self) -> bool {
        self.fired <= self.stored
    }
}
