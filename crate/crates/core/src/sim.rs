//! Forward simulation with ground contact and phase switching.

/// Motion phase of a jumping trial. Transitions only ever run
/// Jumping → Flight → Landing → Static.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Phase {
    Jumping,
    Flight,
    Landing,
    Static,
}

impl Phase {
    pub fn as_index(self) -> usize {
        match self {
            Phase::Jumping => 0,
            Phase::Flight => 1,
            Phase::Landing => 2,
            Phase::Static => 3,
        }
    }
}
