use crate::engine::DEFAULT_MAX_PENDING;
use crate::kind::OpKind;

/// Which operations are acknowledged before they run, plus global limits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EagerPolicy {
    eager: [bool; 20],
    /// Serve attributes from the optimistic cache and prefetch on readdir.
    pub mock_attr: bool,
    pub max_pending: usize,
    pub abort_on_error: bool,
}

impl Default for EagerPolicy {
    fn default() -> Self {
        EagerPolicy { eager: [true; 20], mock_attr: true, max_pending: DEFAULT_MAX_PENDING, abort_on_error: false }
    }
}

impl EagerPolicy {
    /// Every flag off and no attribute mocking: a plain passthrough.
    pub fn passthrough() -> Self {
        EagerPolicy { eager: [false; 20], mock_attr: false, ..EagerPolicy::default() }
    }

    /// False for kinds without a flag (reads, listings, attribute queries).
    pub fn is_eager(&self, kind: OpKind) -> bool {
        kind.flag_index().is_some_and(|i| self.eager[i])
    }

    /// Ignored for kinds without a flag.
    pub fn set(&mut self, kind: OpKind, on: bool) {
        if let Some(i) = kind.flag_index() {
            self.eager[i] = on;
        }
    }

    pub fn with(mut self, kind: OpKind, on: bool) -> Self {
        self.set(kind, on);
        self
    }

    pub fn with_max_pending(mut self, n: usize) -> Self {
        self.max_pending = n;
        self
    }

    pub fn with_mock_attr(mut self, on: bool) -> Self {
        self.mock_attr = on;
        self
    }

    pub fn with_abort_on_error(mut self, on: bool) -> Self {
        self.abort_on_error = on;
        self
    }

    /// Kinds currently acknowledged eagerly, in flag-table order.
    pub fn eager_kinds(&self) -> Vec<OpKind> {
        OpKind::EAGER_CAPABLE.into_iter().filter(|k| self.is_eager(*k)).collect()
    }
}
