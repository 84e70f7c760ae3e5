//! Run parameters and the flat `key = value` configuration format.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! line    := blank | comment | entry
//! comment := '#' any*
//! entry   := key ws* '=' ws* value ws* ('#' any*)?
//! key     := [a-z0-9_]+
//! ```
//!
//! Booleans are `true`/`false`, lists are comma separated (`2,4,6`) and an
//! integer range may be written `1..10` (inclusive).

use crate::channel::NodeId;
use crate::error::ConfigError;
use crate::frogmac::FrogParams;
use crate::ssmac::SuperframeConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficConfig {
    pub urgent_interval_us: u64,
    pub normal_interval_us: u64,
    pub urgent_deadline_us: u64,
    pub packet_length: u32,
    pub queue_capacity: usize,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            urgent_interval_us: 120_000_000,
            normal_interval_us: 10_000_000,
            urgent_deadline_us: 100_000,
            packet_length: 34,
            queue_capacity: 10,
        }
    }
}

/// PHY timing and control-frame sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadioConfig {
    pub byte_time_us: u64,
    pub sifs_us: u64,
    pub rts_bytes: u32,
    pub cts_bytes: u32,
    pub ack_bytes: u32,
    pub eis_ind_bytes: u32,
    pub rrp_req_bytes: u32,
    pub dsp_base_bytes: u32,
    pub dsp_per_grant_bytes: u32,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            byte_time_us: 32,
            sifs_us: 192,
            rts_bytes: 11,
            cts_bytes: 11,
            ack_bytes: 11,
            eis_ind_bytes: 11,
            rrp_req_bytes: 11,
            dsp_base_bytes: 3,
            dsp_per_grant_bytes: 2,
        }
    }
}

impl RadioConfig {
    pub fn airtime(&self, bytes: u32) -> u64 {
        bytes as u64 * self.byte_time_us
    }

    pub fn dsp_bytes(&self, grants: usize) -> u32 {
        self.dsp_base_bytes + self.dsp_per_grant_bytes * grants as u32
    }
}

/// Complete parameter set of one simulation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub total_nodes: usize,
    pub n_urgent: usize,
    /// `None`: every sensor that is not urgent sends normal traffic.
    pub n_normal: Option<usize>,
    pub duration_us: u64,
    pub seed: u64,
    pub traffic: TrafficConfig,
    pub radio: RadioConfig,
    pub ssmac: SuperframeConfig,
    pub frogmac: FrogParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            total_nodes: 20,
            n_urgent: 0,
            n_normal: None,
            duration_us: 5_000_000_000,
            seed: 1,
            traffic: TrafficConfig::default(),
            radio: RadioConfig::default(),
            ssmac: SuperframeConfig::default(),
            frogmac: FrogParams::default(),
        }
    }
}

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

pub fn parse_u64(key: &str, value: &str) -> Result<u64, ConfigError> {
    value
        .replace('_', "")
        .parse()
        .map_err(|_| bad(key, value, "expected a non-negative integer"))
}

pub fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

/// Comma-separated integers; `a..b` expands to the inclusive range.
pub fn parse_list(key: &str, value: &str) -> Result<Vec<u64>, ConfigError> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b) = (parse_u64(key, a.trim())?, parse_u64(key, b.trim())?);
            if a > b {
                return Err(bad(key, value, "empty range"));
            }
            out.extend(a..=b);
        } else {
            out.push(parse_u64(key, part)?);
        }
    }
    if out.is_empty() {
        return Err(bad(key, value, "empty list"));
    }
    Ok(out)
}

/// Splits configuration text into `(line, key, value)` entries.
pub fn parse_entries(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        };
        let key = k.trim();
        if key.is_empty()
            || !key
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        }
        out.push((i + 1, key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl SimConfig {
    pub fn sensors(&self) -> usize {
        self.total_nodes.saturating_sub(1)
    }

    pub fn effective_normal_nodes(&self) -> usize {
        self.n_normal
            .unwrap_or_else(|| self.sensors().saturating_sub(self.n_urgent))
    }

    /// Urgent sensors occupy the lowest ids after the sink.
    pub fn urgent_node_ids(&self) -> Vec<NodeId> {
        (1..=self.n_urgent).map(|i| NodeId(i as u16)).collect()
    }

    /// Normal sensors occupy the highest ids, so the normal population is
    /// the same set of nodes whatever the urgent count.
    pub fn normal_node_ids(&self) -> Vec<NodeId> {
        let sensors = self.sensors();
        let first = sensors + 1 - self.effective_normal_nodes().min(sensors);
        (first..=sensors).map(|i| NodeId(i as u16)).collect()
    }

    /// Applies one configuration entry. Returns `Ok(false)` if the key is not
    /// a run parameter, so callers can layer their own keys on top.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        let u = || parse_u64(key, value);
        let u32v = || -> Result<u32, ConfigError> {
            u32::try_from(parse_u64(key, value)?).map_err(|_| bad(key, value, "too large"))
        };
        match key {
            "total_nodes" => self.total_nodes = u()? as usize,
            "n_urgent" | "urgent_nodes" => self.n_urgent = u()? as usize,
            "n_normal" | "normal_nodes" => {
                self.n_normal = if value == "auto" {
                    None
                } else {
                    Some(u()? as usize)
                }
            }
            "duration_s" => self.duration_us = u()? * 1_000_000,
            "duration_us" => self.duration_us = u()?,
            "seed" => self.seed = u()?,

            "urgent_interval_s" => self.traffic.urgent_interval_us = u()? * 1_000_000,
            "urgent_interval_us" => self.traffic.urgent_interval_us = u()?,
            "normal_interval_s" => self.traffic.normal_interval_us = u()? * 1_000_000,
            "normal_interval_us" => self.traffic.normal_interval_us = u()?,
            "urgent_deadline_ms" => self.traffic.urgent_deadline_us = u()? * 1_000,
            "urgent_deadline_us" => self.traffic.urgent_deadline_us = u()?,
            "packet_length" => self.traffic.packet_length = u32v()?,
            "queue_capacity" => self.traffic.queue_capacity = u()? as usize,

            "byte_time_us" => self.radio.byte_time_us = u()?,
            "propagation_delay_us" => {
                if u()? != 0 {
                    return Err(bad(key, value, "only zero propagation delay is modelled"));
                }
            }
            "sifs_us" => self.radio.sifs_us = u()?,
            "rts_bytes" => self.radio.rts_bytes = u32v()?,
            "cts_bytes" => self.radio.cts_bytes = u32v()?,
            "ack_bytes" => self.radio.ack_bytes = u32v()?,
            "eis_ind_bytes" => self.radio.eis_ind_bytes = u32v()?,
            "rrp_req_bytes" => self.radio.rrp_req_bytes = u32v()?,
            "dsp_base_bytes" => self.radio.dsp_base_bytes = u32v()?,
            "dsp_per_grant_bytes" => self.radio.dsp_per_grant_bytes = u32v()?,

            "nc_slot_us" => self.ssmac.nc_slot_us = u()?,
            "eis_us" => self.ssmac.eis_us = u()?,
            "rrp_subslot_us" => self.ssmac.rrp_subslot_us = u()?,
            "dsp_us" => self.ssmac.dsp_us = u()?,
            "eis_per_slot" => self.ssmac.eis_per_slot = parse_bool(key, value)?,

            "frag_size" => self.frogmac.frag_size = u32v()?,
            "ifs_urgent_us" => self.frogmac.ifs_urgent_us = u()?,
            "ifs_normal_us" => self.frogmac.ifs_normal_us = u()?,
            "gap_frag_us" => self.frogmac.gap_frag_us = u()?,
            "backoff_slot_us" => self.frogmac.backoff_slot_us = u()?,
            "cw_min" => self.frogmac.cw_min = u32v()?,
            "cw_max" => self.frogmac.cw_max = u32v()?,
            "retry_limit" => self.frogmac.retry_limit = u32v()?,
            "header_bytes" => self.frogmac.header_bytes = u32v()?,
            "ack_timeout_us" => self.frogmac.ack_timeout_us = u()?,
            "cts_timeout_us" => self.frogmac.cts_timeout_us = u()?,
            "force_backoff" => {
                self.frogmac.force_backoff = if value == "none" { None } else { Some(u32v()?) }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Effective parameters as `key = value` lines, in a fixed order.
    pub fn to_entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.traffic;
        let r = &self.radio;
        let s = &self.ssmac;
        let f = &self.frogmac;
        vec![
            ("total_nodes", self.total_nodes.to_string()),
            ("n_urgent", self.n_urgent.to_string()),
            (
                "n_normal",
                self.n_normal.map_or("auto".to_string(), |n| n.to_string()),
            ),
            ("duration_us", self.duration_us.to_string()),
            ("seed", self.seed.to_string()),
            ("urgent_interval_us", t.urgent_interval_us.to_string()),
            ("normal_interval_us", t.normal_interval_us.to_string()),
            ("urgent_deadline_us", t.urgent_deadline_us.to_string()),
            ("packet_length", t.packet_length.to_string()),
            ("queue_capacity", t.queue_capacity.to_string()),
            ("byte_time_us", r.byte_time_us.to_string()),
            ("propagation_delay_us", "0".to_string()),
            ("sifs_us", r.sifs_us.to_string()),
            ("rts_bytes", r.rts_bytes.to_string()),
            ("cts_bytes", r.cts_bytes.to_string()),
            ("ack_bytes", r.ack_bytes.to_string()),
            ("eis_ind_bytes", r.eis_ind_bytes.to_string()),
            ("rrp_req_bytes", r.rrp_req_bytes.to_string()),
            ("dsp_base_bytes", r.dsp_base_bytes.to_string()),
            ("dsp_per_grant_bytes", r.dsp_per_grant_bytes.to_string()),
            ("nc_slot_us", s.nc_slot_us.to_string()),
            ("eis_us", s.eis_us.to_string()),
            ("rrp_subslot_us", s.rrp_subslot_us.to_string()),
            ("dsp_us", s.dsp_us.to_string()),
            ("eis_per_slot", s.eis_per_slot.to_string()),
            ("frag_size", f.frag_size.to_string()),
            ("ifs_urgent_us", f.ifs_urgent_us.to_string()),
            ("ifs_normal_us", f.ifs_normal_us.to_string()),
            ("gap_frag_us", f.gap_frag_us.to_string()),
            ("backoff_slot_us", f.backoff_slot_us.to_string()),
            ("cw_min", f.cw_min.to_string()),
            ("cw_max", f.cw_max.to_string()),
            ("retry_limit", f.retry_limit.to_string()),
            ("header_bytes", f.header_bytes.to_string()),
            ("ack_timeout_us", f.ack_timeout_us.to_string()),
            ("cts_timeout_us", f.cts_timeout_us.to_string()),
            (
                "force_backoff",
                f.force_backoff
                    .map_or("none".to_string(), |b| b.to_string()),
            ),
        ]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.total_nodes < 2 || self.total_nodes > u16::MAX as usize {
            return invalid("total_nodes must be in [2, 65535]");
        }
        let n_normal = self.effective_normal_nodes();
        if self.n_urgent + n_normal > self.sensors() {
            return Err(ConfigError::TooManyNodes {
                n_urgent: self.n_urgent,
                n_normal,
                sensors: self.sensors(),
            });
        }
        if self.duration_us == 0 {
            return invalid("duration must be positive");
        }
        let t = &self.traffic;
        if t.urgent_interval_us == 0 || t.normal_interval_us == 0 {
            return invalid("traffic intervals must be positive");
        }
        if t.packet_length == 0 {
            return invalid("packet_length must be positive");
        }
        if t.queue_capacity == 0 {
            return invalid("queue_capacity must be positive");
        }
        if self.radio.byte_time_us == 0 {
            return invalid("byte_time_us must be positive");
        }
        self.frogmac.validate(&self.radio, t.packet_length)?;
        self.ssmac
            .validate(&self.radio, t.packet_length, self.n_urgent)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn entries_skip_comments_and_blank_lines() {
        let text = "# sweep\n\nseed = 3  # trailing\nframe_x=1\n";
        let e = parse_entries(text).unwrap();
        assert_eq!(
            e,
            vec![
                (3, "seed".into(), "3".into()),
                (4, "frame_x".into(), "1".into())
            ]
        );
    }

    #[test]
    fn syntax_error_names_line() {
        let err = parse_entries("seed = 1\nnot an entry\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 2, .. }));
    }

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_list("seeds", "1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_list("x", "2, 4,8").unwrap(), vec![2, 4, 8]);
        assert!(parse_list("x", "").is_err());
        assert!(parse_list("x", "5..2").is_err());
    }

    #[test]
    fn set_round_trips_through_entries() {
        let mut c = SimConfig::default();
        c.set("frag_size", "8").unwrap();
        c.set("eis_per_slot", "false").unwrap();
        c.set("urgent_deadline_ms", "20").unwrap();
        let mut d = SimConfig::default();
        for (k, v) in c.to_entries() {
            assert!(d.set(k, &v).unwrap(), "key {k} not accepted");
        }
        assert_eq!(c, d);
    }

    #[test]
    fn unknown_key_is_reported_as_unhandled() {
        let mut c = SimConfig::default();
        assert!(!c.set("bogus", "1").unwrap());
        assert!(c.set("seed", "x").is_err());
    }

    #[test]
    fn rejects_too_many_urgent_nodes() {
        let c = SimConfig {
            n_urgent: 20,
            ..SimConfig::default()
        };
        assert!(matches!(
            c.validate(),
            Err(ConfigError::TooManyNodes { .. })
        ));
        // 19 grants need a 41-byte schedule broadcast
        let mut c = SimConfig {
            n_urgent: 19,
            ..SimConfig::default()
        };
        c.ssmac.dsp_us = 1312;
        c.validate().unwrap();
    }

    #[test]
    fn rejects_fragment_size_outside_range() {
        for bad in [1, 35] {
            let mut c = SimConfig::default();
            c.frogmac.frag_size = bad;
            assert!(matches!(
                c.validate(),
                Err(ConfigError::FragSizeOutOfRange { .. })
            ));
        }
    }
}
