//! Shared fixtures for the criterion benchmarks.

use sathet::ctmc::{RaInputs, RaModel};
use sathet::link::{service_rates, ServiceRates};
use sathet::{Analyzer, AvailabilityProfile, ContentCatalog, SystemParams};

/// Defaults with the cache availabilities already solved.
pub struct Fixture {
    pub params: SystemParams,
    pub catalog: ContentCatalog,
    pub availability: AvailabilityProfile,
    pub rates: ServiceRates,
}

impl Fixture {
    pub fn new(params: SystemParams) -> Self {
        let availability = Analyzer::new().availability(&params).expect("default caches solve");
        let rates = service_rates(&params.link_budget().capacities(), &params.size_distribution());
        Self {
            catalog: params.catalog(),
            params,
            availability,
            rates,
        }
    }

    pub fn model(&self) -> RaModel {
        RaModel::build(&RaInputs {
            channels: self.params.channel_config(),
            catalog: &self.catalog,
            availability: &self.availability,
            weights: self.params.mode_weights(),
            geometry: self.params.geometry(),
            rates: self.rates,
        })
        .expect("default model builds")
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new(SystemParams::default())
    }
}
