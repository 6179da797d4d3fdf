//! In-process node/topic graph.
//!
//! Nodes can be started and stopped repeatedly, their parameters changed,
//! subscription callbacks swapped, and topic bindings remapped, all while the
//! rest of the graph keeps running. Delivery is synchronous on the
//! publisher's call. Every operation passes through one re-entrant lock, so
//! delivery order per topic is total even with several calling threads, and
//! callbacks may call back into the bus.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use parking_lot::ReentrantMutex;
use serde::Serialize;

use crate::msg::{CmdVel, LaserScan, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifecycle {
    Created,
    Running,
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Schema {
    CmdVel,
    Pose,
    Laser,
    Scalar,
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schema::CmdVel => "cmd_vel",
            Schema::Pose => "pose",
            Schema::Laser => "laser",
            Schema::Scalar => "scalar",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Payload {
    CmdVel(CmdVel),
    Pose(Pose),
    Laser(LaserScan),
    Scalar(f64),
}

impl Payload {
    pub fn schema(&self) -> Schema {
        match self {
            Payload::CmdVel(_) => Schema::CmdVel,
            Payload::Pose(_) => Schema::Pose,
            Payload::Laser(_) => Schema::Laser,
            Payload::Scalar(_) => Schema::Scalar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Message {
    pub topic: String,
    pub schema: Schema,
    pub payload: Payload,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Bool(bool),
    Text(String),
}

/// What a subscription callback sees on each delivery.
pub struct Delivery<'a> {
    pub message: &'a Message,
    pub node: &'a str,
    pub params: &'a IndexMap<String, ParamValue>,
}

pub type Callback = Arc<dyn Fn(&Delivery<'_>) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SubscriptionId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Subscription,
    Publication,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BusError {
    #[error("node `{0}` already exists")]
    DuplicateNode(String),
    #[error("no node named `{0}`")]
    UnknownNode(String),
    #[error("no subscription {0:?}")]
    UnknownSubscription(SubscriptionId),
    #[error("node `{0}` is not running")]
    NodeNotRunning(String),
    #[error("topic `{topic}` carries {expected}, got {found}")]
    SchemaMismatch {
        topic: String,
        expected: Schema,
        found: Schema,
    },
    #[error("node `{node}` has no {role:?} bound to `{topic}`")]
    NotBound {
        node: String,
        role: Role,
        topic: String,
    },
}

/// Observable bus activity, drained by the owner for tracing.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum BusEvent {
    Publish {
        node: String,
        topic: String,
        schema: Schema,
        seq: u64,
        delivered: usize,
    },
    Lifecycle {
        node: String,
        from: Option<Lifecycle>,
        to: Lifecycle,
    },
    Remap {
        node: String,
        role: Role,
        from: String,
        to: String,
    },
    SetParam {
        node: String,
        name: String,
        value: ParamValue,
    },
}

struct SubscriptionRecord {
    id: SubscriptionId,
    topic: String,
    callback: Callback,
    delivered: u64,
}

struct Publication {
    declared: String,
    bound: String,
}

struct NodeRecord {
    lifecycle: Lifecycle,
    subscriptions: Vec<SubscriptionRecord>,
    publications: Vec<Publication>,
    params: IndexMap<String, ParamValue>,
}

struct TopicState {
    schema: Schema,
    seq: u64,
}

#[derive(Default)]
struct BusState {
    nodes: IndexMap<String, NodeRecord>,
    topics: IndexMap<String, TopicState>,
    events: Vec<BusEvent>,
    next_sub: u64,
}

impl BusState {
    fn node_mut(&mut self, name: &str) -> Result<&mut NodeRecord, BusError> {
        self.nodes
            .get_mut(name)
            .ok_or_else(|| BusError::UnknownNode(name.to_string()))
    }

    fn subscription_mut(
        &mut self,
        id: SubscriptionId,
    ) -> Result<&mut SubscriptionRecord, BusError> {
        self.nodes
            .values_mut()
            .flat_map(|n| n.subscriptions.iter_mut())
            .find(|s| s.id == id)
            .ok_or(BusError::UnknownSubscription(id))
    }

    fn set_lifecycle(&mut self, name: &str, to: Lifecycle) -> Result<(), BusError> {
        let node = self.node_mut(name)?;
        let from = node.lifecycle;
        if from == to {
            return Ok(());
        }
        node.lifecycle = to;
        self.events.push(BusEvent::Lifecycle {
            node: name.to_string(),
            from: Some(from),
            to,
        });
        Ok(())
    }
}

/// Read-only view of one node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeInfo {
    pub name: String,
    pub lifecycle: Lifecycle,
    pub subscriptions: Vec<String>,
    pub publications: Vec<String>,
    pub parameters: IndexMap<String, ParamValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicInfo {
    pub name: String,
    pub schema: Schema,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphSnapshot {
    pub nodes: Vec<NodeInfo>,
    pub topics: Vec<TopicInfo>,
}

/// Cloneable handle to a shared bus.
#[derive(Clone, Default)]
pub struct Bus {
    inner: Arc<ReentrantMutex<RefCell<BusState>>>,
}

impl fmt::Debug for Bus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bus").finish_non_exhaustive()
    }
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    fn with<R>(&self, f: impl FnOnce(&mut BusState) -> R) -> R {
        let guard = self.inner.lock();
        let mut state = guard.borrow_mut();
        f(&mut state)
    }

    pub fn create_node(&self, name: &str) -> Result<(), BusError> {
        self.with(|s| {
            if s.nodes.contains_key(name) {
                return Err(BusError::DuplicateNode(name.to_string()));
            }
            s.nodes.insert(
                name.to_string(),
                NodeRecord {
                    lifecycle: Lifecycle::Created,
                    subscriptions: Vec::new(),
                    publications: Vec::new(),
                    params: IndexMap::new(),
                },
            );
            s.events.push(BusEvent::Lifecycle {
                node: name.to_string(),
                from: None,
                to: Lifecycle::Created,
            });
            Ok(())
        })
    }

    /// Starts (or restarts) a node; its subscriptions receive deliveries again.
    /// Starting a running node does nothing.
    pub fn start(&self, name: &str) -> Result<(), BusError> {
        self.with(|s| s.set_lifecycle(name, Lifecycle::Running))
    }

    /// Stops delivery to and publishing from a node, keeping its definition.
    pub fn stop(&self, name: &str) -> Result<(), BusError> {
        self.with(|s| s.set_lifecycle(name, Lifecycle::Stopped))
    }

    /// Starts every named node in order; not atomic as a group.
    pub fn start_all<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Result<(), BusError> {
        names.into_iter().try_for_each(|n| self.start(n))
    }

    pub fn stop_all<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Result<(), BusError> {
        names.into_iter().try_for_each(|n| self.stop(n))
    }

    pub fn lifecycle(&self, name: &str) -> Option<Lifecycle> {
        self.with(|s| s.nodes.get(name).map(|n| n.lifecycle))
    }

    pub fn subscribe(
        &self,
        node: &str,
        topic: &str,
        callback: impl Fn(&Delivery<'_>) + Send + Sync + 'static,
    ) -> Result<SubscriptionId, BusError> {
        self.with(|s| {
            let id = SubscriptionId(s.next_sub);
            let record = s.node_mut(node)?;
            record.subscriptions.push(SubscriptionRecord {
                id,
                topic: topic.to_string(),
                callback: Arc::new(callback),
                delivered: 0,
            });
            s.next_sub += 1;
            Ok(id)
        })
    }

    /// Swaps a subscription's handler. Each delivery uses exactly one version.
    pub fn replace_callback(
        &self,
        id: SubscriptionId,
        callback: impl Fn(&Delivery<'_>) + Send + Sync + 'static,
    ) -> Result<(), BusError> {
        self.with(|s| {
            s.subscription_mut(id)?.callback = Arc::new(callback);
            Ok(())
        })
    }

    pub fn delivered_count(&self, id: SubscriptionId) -> Result<u64, BusError> {
        self.with(|s| s.subscription_mut(id).map(|r| r.delivered))
    }

    /// Declares a publication so it can be listed and remapped before first use.
    pub fn advertise(&self, node: &str, topic: &str) -> Result<(), BusError> {
        self.with(|s| {
            let record = s.node_mut(node)?;
            if !record.publications.iter().any(|p| p.declared == topic) {
                record.publications.push(Publication {
                    declared: topic.to_string(),
                    bound: topic.to_string(),
                });
            }
            Ok(())
        })
    }

    /// Publishes through the node's binding for `topic` and delivers to
    /// every running subscriber in subscription order. Returns the number of
    /// deliveries.
    pub fn publish(&self, node: &str, topic: &str, payload: Payload) -> Result<usize, BusError> {
        let guard = self.inner.lock();
        let (message, targets) = {
            let mut s = guard.borrow_mut();
            let record = s.node_mut(node)?;
            if record.lifecycle != Lifecycle::Running {
                return Err(BusError::NodeNotRunning(node.to_string()));
            }
            let bound = match record.publications.iter().find(|p| p.declared == topic) {
                Some(p) => p.bound.clone(),
                None => {
                    record.publications.push(Publication {
                        declared: topic.to_string(),
                        bound: topic.to_string(),
                    });
                    topic.to_string()
                }
            };
            let schema = payload.schema();
            let topic_state = s
                .topics
                .entry(bound.clone())
                .or_insert(TopicState { schema, seq: 0 });
            if topic_state.schema != schema {
                return Err(BusError::SchemaMismatch {
                    topic: bound,
                    expected: topic_state.schema,
                    found: schema,
                });
            }
            topic_state.seq += 1;
            let message = Message {
                topic: bound.clone(),
                schema,
                payload,
                seq: topic_state.seq,
            };
            let mut targets = Vec::new();
            for (name, n) in s.nodes.iter_mut() {
                if n.lifecycle != Lifecycle::Running {
                    continue;
                }
                for sub in n.subscriptions.iter_mut().filter(|sub| sub.topic == bound) {
                    sub.delivered += 1;
                    targets.push((sub.id, sub.callback.clone(), name.clone(), n.params.clone()));
                }
            }
            targets.sort_by_key(|(id, ..)| *id);
            s.events.push(BusEvent::Publish {
                node: node.to_string(),
                topic: bound,
                schema,
                seq: message.seq,
                delivered: targets.len(),
            });
            (message, targets)
        };
        for (_, callback, name, params) in &targets {
            callback(&Delivery {
                message: &message,
                node: name,
                params,
            });
        }
        drop(guard);
        Ok(targets.len())
    }

    pub fn set_param(&self, node: &str, name: &str, value: ParamValue) -> Result<(), BusError> {
        self.with(|s| {
            s.node_mut(node)?
                .params
                .insert(name.to_string(), value.clone());
            s.events.push(BusEvent::SetParam {
                node: node.to_string(),
                name: name.to_string(),
                value,
            });
            Ok(())
        })
    }

    /// `Ok(None)` means the parameter was never set.
    pub fn get_param(&self, node: &str, name: &str) -> Result<Option<ParamValue>, BusError> {
        self.with(|s| Ok(s.node_mut(node)?.params.get(name).cloned()))
    }

    /// Moves a node's subscription or publication from `old_topic` to
    /// `new_topic`, effective for the next publish.
    pub fn remap(
        &self,
        node: &str,
        role: Role,
        old_topic: &str,
        new_topic: &str,
    ) -> Result<(), BusError> {
        self.with(|s| {
            let record = s.node_mut(node)?;
            let not_bound = || BusError::NotBound {
                node: node.to_string(),
                role,
                topic: old_topic.to_string(),
            };
            match role {
                Role::Subscription => {
                    let mut found = false;
                    for sub in record
                        .subscriptions
                        .iter_mut()
                        .filter(|s| s.topic == old_topic)
                    {
                        sub.topic = new_topic.to_string();
                        found = true;
                    }
                    if !found {
                        return Err(not_bound());
                    }
                }
                Role::Publication => {
                    let publication = record
                        .publications
                        .iter_mut()
                        .find(|p| p.bound == old_topic)
                        .ok_or_else(not_bound)?;
                    publication.bound = new_topic.to_string();
                }
            }
            if old_topic != new_topic {
                s.events.push(BusEvent::Remap {
                    node: node.to_string(),
                    role,
                    from: old_topic.to_string(),
                    to: new_topic.to_string(),
                });
            }
            Ok(())
        })
    }

    pub fn node(&self, name: &str) -> Option<NodeInfo> {
        self.with(|s| s.nodes.get(name).map(|n| node_info(name, n)))
    }

    pub fn graph(&self) -> GraphSnapshot {
        self.with(|s| GraphSnapshot {
            nodes: s.nodes.iter().map(|(k, n)| node_info(k, n)).collect(),
            topics: s
                .topics
                .iter()
                .map(|(k, t)| TopicInfo {
                    name: k.clone(),
                    schema: t.schema,
                    seq: t.seq,
                })
                .collect(),
        })
    }

    pub fn drain_events(&self) -> Vec<BusEvent> {
        self.with(|s| std::mem::take(&mut s.events))
    }
}

fn node_info(name: &str, n: &NodeRecord) -> NodeInfo {
    NodeInfo {
        name: name.to_string(),
        lifecycle: n.lifecycle,
        subscriptions: n.subscriptions.iter().map(|s| s.topic.clone()).collect(),
        publications: n.publications.iter().map(|p| p.bound.clone()).collect(),
        parameters: n.params.clone(),
    }
}
