use std::fmt;
use std::sync::{Arc, OnceLock};

use indexmap::IndexMap;

use super::Expr;

/// Whether an expression is being evaluated as an event guard or as an action.
///
/// Hosts must refuse side-effecting selectors in [`EvalMode::Guard`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Guard,
    Action,
}

/// An object from the embedding program that action blocks can send messages to.
pub trait HostObject: Send + Sync {
    fn class_name(&self) -> &str;

    fn send(&self, selector: &str, args: &[Value], mode: EvalMode) -> Result<Value, EvalError>;
}

/// Shared reference to a host object. Equality is identity.
#[derive(Clone)]
pub struct HostRef(pub Arc<dyn HostObject>);

impl HostRef {
    pub fn class_name(&self) -> &str {
        self.0.class_name()
    }
}

impl PartialEq for HostRef {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl fmt::Debug for HostRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HostRef({})", self.0.class_name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Boolean(bool),
    Host(HostRef),
    Nil,
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Number(_) => "Number",
            Value::Boolean(_) => "Boolean",
            Value::Host(_) => "HostObject",
            Value::Nil => "Nil",
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(n) => write!(f, "{n}"),
            Value::Boolean(b) => write!(f, "{b}"),
            Value::Host(h) => write!(f, "a {}", h.class_name()),
            Value::Nil => f.write_str("nil"),
        }
    }
}

impl serde::Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Number(n) => s.serialize_f64(*n),
            Value::Boolean(b) => s.serialize_bool(*b),
            Value::Host(h) => s.serialize_str(&format!("<{}>", h.class_name())),
            Value::Nil => s.serialize_unit(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("{receiver} does not understand `{selector}`")]
    UnknownSelector { receiver: String, selector: String },
    #[error("`{selector}` expects {expected} argument(s), got {found}")]
    WrongArity {
        selector: String,
        expected: usize,
        found: usize,
    },
    #[error("expected {expected}, got {found}")]
    TypeMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("non-finite number produced by `{0}`")]
    NonFinite(String),
    #[error("{0}")]
    Host(String),
}

pub type Frame = IndexMap<String, Value>;

type Factory = Box<dyn Fn() -> Arc<dyn HostObject> + Send + Sync>;

struct HostClass {
    factory: Factory,
    instance: OnceLock<HostRef>,
}

/// Host classes reachable from action blocks by name, each with a lazily
/// created singleton returned by `Class uniqueInstance`.
#[derive(Default)]
pub struct HostRegistry {
    classes: IndexMap<String, HostClass>,
}

impl HostRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        class: impl Into<String>,
        factory: impl Fn() -> Arc<dyn HostObject> + Send + Sync + 'static,
    ) {
        self.classes.insert(
            class.into(),
            HostClass {
                factory: Box::new(factory),
                instance: OnceLock::new(),
            },
        );
    }

    pub fn contains(&self, class: &str) -> bool {
        self.classes.contains_key(class)
    }

    pub fn unique_instance(&self, class: &str) -> Option<HostRef> {
        let entry = self.classes.get(class)?;
        Some(
            entry
                .instance
                .get_or_init(|| HostRef((entry.factory)()))
                .clone(),
        )
    }
}

impl fmt::Debug for HostRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.classes.keys()).finish()
    }
}

/// Lexically chained variable frames, outermost first, plus the host registry.
#[derive(Clone, Copy)]
pub struct Environment<'a> {
    frames: &'a [&'a Frame],
    hosts: &'a HostRegistry,
}

impl<'a> Environment<'a> {
    pub fn new(frames: &'a [&'a Frame], hosts: &'a HostRegistry) -> Self {
        Self { frames, hosts }
    }

    pub fn lookup(&self, name: &str) -> Option<&'a Value> {
        self.frames.iter().rev().find_map(|frame| frame.get(name))
    }

    pub fn hosts(&self) -> &'a HostRegistry {
        self.hosts
    }
}

fn finite(value: Value, selector: &str) -> Result<Value, EvalError> {
    match value {
        Value::Number(n) if !n.is_finite() => Err(EvalError::NonFinite(selector.to_string())),
        other => Ok(other),
    }
}

fn builtin_unary(receiver: Value, selector: &str) -> Result<Value, EvalError> {
    match (&receiver, selector) {
        (Value::Number(n), "negated") => Ok(Value::Number(-n)),
        (Value::Boolean(b), "not") => Ok(Value::Boolean(!b)),
        (Value::Host(h), _) => Err(EvalError::UnknownSelector {
            receiver: h.class_name().to_string(),
            selector: selector.to_string(),
        }),
        _ => Err(EvalError::UnknownSelector {
            receiver: receiver.type_name().to_string(),
            selector: selector.to_string(),
        }),
    }
}

pub fn eval(expr: &Expr, env: &Environment<'_>, mode: EvalMode) -> Result<Value, EvalError> {
    match expr {
        Expr::Number(n) => Ok(Value::Number(*n)),
        Expr::Boolean(b) => Ok(Value::Boolean(*b)),
        Expr::VarRef(name) => env
            .lookup(name)
            .cloned()
            .ok_or_else(|| EvalError::UnknownVariable(name.clone())),
        Expr::Parenthesized(inner) => eval(inner, env, mode),
        Expr::Unary { receiver, selector } => {
            // `Class uniqueInstance` resolves against the host registry when
            // the name is not shadowed by a variable.
            if let Expr::VarRef(class) = receiver.as_ref() {
                if selector == "uniqueInstance" && env.lookup(class).is_none() {
                    return env
                        .hosts()
                        .unique_instance(class)
                        .map(Value::Host)
                        .ok_or_else(|| EvalError::UnknownVariable(class.clone()));
                }
            }
            let recv = eval(receiver, env, mode)?;
            match recv {
                Value::Host(host) => finite(host.0.send(selector, &[], mode)?, selector),
                other => builtin_unary(other, selector),
            }
        }
        Expr::Keyword {
            receiver,
            selector,
            args,
        } => {
            let recv = eval(receiver, env, mode)?;
            let expected = Expr::keyword_parts(selector).len();
            if expected != args.len() {
                return Err(EvalError::WrongArity {
                    selector: selector.clone(),
                    expected,
                    found: args.len(),
                });
            }
            let values = args
                .iter()
                .map(|a| eval(a, env, mode))
                .collect::<Result<Vec<_>, _>>()?;
            match recv {
                Value::Host(host) => finite(host.0.send(selector, &values, mode)?, selector),
                other => Err(EvalError::UnknownSelector {
                    receiver: other.type_name().to_string(),
                    selector: selector.clone(),
                }),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::expr::parse_expr;

    struct Stub {
        obstacle: bool,
        commands: AtomicUsize,
    }

    impl HostObject for Stub {
        fn class_name(&self) -> &str {
            "Stub"
        }

        fn send(&self, selector: &str, args: &[Value], mode: EvalMode) -> Result<Value, EvalError> {
            match selector {
                "isThereAnObstacle:" => Ok(Value::Boolean(self.obstacle)),
                "forward:" if mode == EvalMode::Action => {
                    self.commands.fetch_add(1, Ordering::SeqCst);
                    Ok(Value::Nil)
                }
                "huge" => Ok(Value::Number(f64::INFINITY)),
                _ => Err(EvalError::UnknownSelector {
                    receiver: "Stub".into(),
                    selector: format!("{selector}/{}", args.len()),
                }),
            }
        }
    }

    fn run(src: &str, frame: &Frame, hosts: &HostRegistry) -> Result<Value, EvalError> {
        let frames = [frame];
        let env = Environment::new(&frames, hosts);
        eval(&parse_expr(src).unwrap(), &env, EvalMode::Guard)
    }

    fn stub_frame(obstacle: bool) -> (Frame, Arc<Stub>) {
        let stub = Arc::new(Stub {
            obstacle,
            commands: AtomicUsize::new(0),
        });
        let mut frame = Frame::new();
        frame.insert("robulab".into(), Value::Host(HostRef(stub.clone())));
        frame.insert("min_distance".into(), Value::Number(0.5));
        frame.insert("t_vel".into(), Value::Number(0.5));
        (frame, stub)
    }

    #[test]
    fn negation_of_number() {
        let (frame, _) = stub_frame(false);
        let hosts = HostRegistry::new();
        assert_eq!(
            run("t_vel negated", &frame, &hosts),
            Ok(Value::Number(-0.5))
        );
    }

    #[test]
    fn negated_host_predicate() {
        let (frame, stub) = stub_frame(true);
        let hosts = HostRegistry::new();
        let v = run(
            "(robulab isThereAnObstacle: min_distance) not",
            &frame,
            &hosts,
        );
        assert_eq!(v, Ok(Value::Boolean(false)));
        assert_eq!(stub.commands.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn unique_instance_is_a_singleton() {
        let created = Arc::new(AtomicUsize::new(0));
        let mut hosts = HostRegistry::new();
        let counter = created.clone();
        hosts.register("RobulabBridge", move || {
            counter.fetch_add(1, Ordering::SeqCst);
            Arc::new(Stub {
                obstacle: false,
                commands: AtomicUsize::new(0),
            })
        });
        let frame = Frame::new();
        let a = run("RobulabBridge uniqueInstance", &frame, &hosts).unwrap();
        let b = run("RobulabBridge uniqueInstance", &frame, &hosts).unwrap();
        assert!(matches!(a, Value::Host(_)));
        assert_eq!(a, b);
        assert_eq!(created.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn error_cases() {
        let (frame, _) = stub_frame(false);
        let hosts = HostRegistry::new();
        assert_eq!(
            run("nope", &frame, &hosts),
            Err(EvalError::UnknownVariable("nope".into()))
        );
        assert!(matches!(
            run("t_vel not", &frame, &hosts),
            Err(EvalError::UnknownSelector { .. })
        ));
        assert!(matches!(
            run("true negated", &frame, &hosts),
            Err(EvalError::UnknownSelector { .. })
        ));
        assert!(matches!(
            run("t_vel foo: 1", &frame, &hosts),
            Err(EvalError::UnknownSelector { .. })
        ));
        assert!(matches!(
            run("robulab huge", &frame, &hosts),
            Err(EvalError::NonFinite(_))
        ));
        assert!(matches!(
            run("Missing uniqueInstance", &frame, &hosts),
            Err(EvalError::UnknownVariable(_))
        ));
    }

    #[test]
    fn wrong_arity_is_reported() {
        let (frame, _) = stub_frame(false);
        let hosts = HostRegistry::new();
        let expr = Expr::Keyword {
            receiver: Box::new(Expr::VarRef("robulab".into())),
            selector: "at:put:".into(),
            args: vec![Expr::Number(1.0)],
        };
        let frames = [&frame];
        let env = Environment::new(&frames, &hosts);
        assert!(matches!(
            eval(&expr, &env, EvalMode::Action),
            Err(EvalError::WrongArity {
                expected: 2,
                found: 1,
                ..
            })
        ));
    }

    #[test]
    fn lookup_is_innermost_first() {
        let mut outer = Frame::new();
        outer.insert("x".into(), Value::Number(1.0));
        let mut inner = Frame::new();
        inner.insert("x".into(), Value::Number(2.0));
        let hosts = HostRegistry::new();
        let frames = [&outer, &inner];
        let env = Environment::new(&frames, &hosts);
        assert_eq!(env.lookup("x"), Some(&Value::Number(2.0)));
    }

    #[test]
    fn guard_evaluation_does_not_command() {
        let (frame, stub) = stub_frame(true);
        let hosts = HostRegistry::new();
        let frames = [&frame];
        let env = Environment::new(&frames, &hosts);
        let expr = parse_expr("robulab forward: 1").unwrap();
        assert!(eval(&expr, &env, EvalMode::Guard).is_err());
        assert_eq!(stub.commands.load(Ordering::SeqCst), 0);
        assert!(eval(&expr, &env, EvalMode::Action).is_ok());
        assert_eq!(stub.commands.load(Ordering::SeqCst), 1);
    }
}
