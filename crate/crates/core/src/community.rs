use crate::building::{BuildingParams, BuildingProfile};
use crate::topology::Topology;

/// Validated buildings, their profiles and the trading graph.
///
/// `buildings[i]`, `profiles[i]` and topology node `i` refer to the same
/// building.
#[derive(Debug, Clone, PartialEq)]
pub struct Community {
    pub buildings: Vec<BuildingParams>,
    pub profiles: Vec<BuildingProfile>,
    pub topology: Topology,
}

impl Community {
    pub fn horizon(&self) -> usize {
        self.buildings
            .first()
            .map_or(0, |b| b.grid.buy_price.len())
    }

    pub fn len(&self) -> usize {
        self.buildings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buildings.is_empty()
    }

    /// The same community with every P2P limit set to zero.
    pub fn without_p2p(&self) -> Self {
        let mut c = self.clone();
        for b in &mut c.buildings {
            b.grid.p2p_limit = 0.0;
        }
        c
    }
}
