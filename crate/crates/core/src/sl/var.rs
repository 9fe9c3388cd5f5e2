use std::fmt;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

/// A logical variable: a base name plus a generation counter.
///
/// Version 0 renders as the bare name, any other version as `name#version`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    pub name: Arc<str>,
    pub version: u32,
}

impl Var {
    pub fn new(name: &str, version: u32) -> Var {
        Var { name: Arc::from(name), version }
    }

    pub fn named(name: &str) -> Var {
        Var::new(name, 0)
    }

    /// Reserved error-status variable.
    pub fn eps() -> Var {
        Var::named("eps")
    }

    /// Reserved return-value variable.
    pub fn res() -> Var {
        Var::named("res")
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.version == 0 {
            write!(f, "{}", self.name)
        } else {
            write!(f, "{}#{}", self.name, self.version)
        }
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Fresh-variable generator. Versions handed out are unique per generator.
#[derive(Debug)]
pub struct FreshGen {
    next: AtomicU32,
}

impl FreshGen {
    pub fn new(start: u32) -> FreshGen {
        FreshGen { next: AtomicU32::new(start.max(1)) }
    }

    pub fn fresh(&self, name: &str) -> Var {
        let v = self.next.fetch_add(1, Ordering::Relaxed);
        Var::new(name, v)
    }

    pub fn fresh_like(&self, v: &Var) -> Var {
        self.fresh(&v.name)
    }

    /// Make sure every version handed out from now on exceeds `floor`.
    pub fn bump_past(&self, floor: u32) {
        self.next.fetch_max(floor.saturating_add(1), Ordering::Relaxed);
    }

    pub fn peek(&self) -> u32 {
        self.next.load(Ordering::Relaxed)
    }
}

impl Default for FreshGen {
    fn default() -> Self {
        FreshGen::new(1)
    }
}

impl Clone for FreshGen {
    fn clone(&self) -> Self {
        FreshGen::new(self.peek())
    }
}
