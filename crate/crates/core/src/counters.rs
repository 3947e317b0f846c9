//! Instrumentation counters.
//!
//! Stage counters are indexed by the slot numbers of a [`StageLayout`]
//! (crate::query::StageLayout); site counters by the dense index a
//! [`CallSiteCache`](crate::lambda::CallSiteCache) assigns at registration.
//! Workers keep private sets and merge them by addition.

use std::ops::AddAssign;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageCounters {
    /// Control-flow calls received by the stage (advance/get or accept).
    pub control_dispatches: u64,
    /// Lambda applications performed by the stage.
    pub lambda_applies: u64,
}

impl AddAssign for StageCounters {
    fn add_assign(&mut self, o: Self) {
        self.control_dispatches += o.control_dispatches;
        self.lambda_applies += o.lambda_applies;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SiteCounters {
    pub link_events: u64,
    pub instantiations: u64,
    pub applies: u64,
}

impl AddAssign for SiteCounters {
    fn add_assign(&mut self, o: Self) {
        self.link_events += o.link_events;
        self.instantiations += o.instantiations;
        self.applies += o.applies;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CounterSet {
    pub stages: Vec<StageCounters>,
    pub sites: Vec<SiteCounters>,
}

impl CounterSet {
    pub fn new(stage_slots: usize, site_slots: usize) -> Self {
        CounterSet {
            stages: vec![StageCounters::default(); stage_slots],
            sites: vec![SiteCounters::default(); site_slots],
        }
    }

    #[inline]
    pub fn stage_mut(&mut self, slot: usize) -> &mut StageCounters {
        if slot >= self.stages.len() {
            self.stages.resize(slot + 1, StageCounters::default());
        }
        &mut self.stages[slot]
    }

    #[inline]
    pub fn site_mut(&mut self, site: usize) -> &mut SiteCounters {
        if site >= self.sites.len() {
            self.sites.resize(site + 1, SiteCounters::default());
        }
        &mut self.sites[site]
    }

    pub fn stage(&self, slot: usize) -> StageCounters {
        self.stages.get(slot).copied().unwrap_or_default()
    }

    pub fn site(&self, site: usize) -> SiteCounters {
        self.sites.get(site).copied().unwrap_or_default()
    }

    /// Element-wise addition; the shorter side is padded with zeros.
    pub fn merge(&mut self, other: &CounterSet) {
        for (i, s) in other.stages.iter().enumerate() {
            *self.stage_mut(i) += *s;
        }
        for (i, s) in other.sites.iter().enumerate() {
            *self.site_mut(i) += *s;
        }
    }

    pub fn total_control_dispatches(&self) -> u64 {
        self.stages.iter().map(|s| s.control_dispatches).sum()
    }

    pub fn total_lambda_applies(&self) -> u64 {
        self.stages.iter().map(|s| s.lambda_applies).sum()
    }

    pub fn total_instantiations(&self) -> u64 {
        self.sites.iter().map(|s| s.instantiations).sum()
    }

    pub fn total_link_events(&self) -> u64 {
        self.sites.iter().map(|s| s.link_events).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.stages.iter().all(|s| *s == StageCounters::default())
            && self.sites.iter().all(|s| *s == SiteCounters::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_pads_and_adds() {
        let mut a = CounterSet::new(1, 0);
        a.stage_mut(0).control_dispatches = 3;
        let mut b = CounterSet::new(2, 1);
        b.stage_mut(0).control_dispatches = 4;
        b.stage_mut(1).lambda_applies = 5;
        b.site_mut(0).instantiations = 2;
        a.merge(&b);
        assert_eq!(a.stage(0).control_dispatches, 7);
        assert_eq!(a.stage(1).lambda_applies, 5);
        assert_eq!(a.total_instantiations(), 2);
        assert!(!a.is_zero());
        assert!(CounterSet::new(3, 3).is_zero());
    }
}
