//! The init document: ports table, clusters and the functions root.
//!
//! ```json
//! {"host":"127.0.0.1","clerk_port":7000,"broker_port":7001,
//!  "functions_root":"functions","clusters":{"c1":2},
//!  "ports":{"gates":{"hellocot":{"push":7010,"pull":7011}},
//!           "clusters":{"c1":7020},"events":7030}}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use gatefaas_core::codec;
use gatefaas_core::message::DEFAULT_PORT_RANGE;
use gatefaas_core::{value_map, PortsTable, Value, ValueMap};

use super::ControllerError;

#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    /// Address every server binds to.
    pub host: String,
    pub clerk_port: u16,
    /// Optional framed-TCP Methods-space facade for remote brokers.
    pub broker_port: Option<u16>,
    pub ports: PortsTable,
    pub clusters: BTreeMap<String, usize>,
    pub functions_root: PathBuf,
    pub port_range: (u16, u16),
}

impl InitConfig {
    pub fn new(ports: PortsTable, clusters: BTreeMap<String, usize>, functions_root: impl Into<PathBuf>, clerk_port: u16) -> Self {
        InitConfig {
            host: "127.0.0.1".into(),
            clerk_port,
            broker_port: None,
            ports,
            clusters,
            functions_root: functions_root.into(),
            port_range: DEFAULT_PORT_RANGE,
        }
    }

    /// Loads the init file; a relative `functions_root` is resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ControllerError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ControllerError::Config(format!("{}: {e}", path.display())))?;
        let mut config = InitConfig::from_text(&text)?;
        if config.functions_root.is_relative() {
            if let Some(dir) = path.parent() {
                config.functions_root = dir.join(&config.functions_root);
            }
        }
        Ok(config)
    }

    pub fn from_text(text: &str) -> Result<Self, ControllerError> {
        let map = codec::parse_text(text).map_err(|e| ControllerError::Config(e.to_string()))?;
        InitConfig::from_map(&map)
    }

    pub fn from_map(map: &ValueMap) -> Result<Self, ControllerError> {
        let bad = |what: &str| ControllerError::Config(format!("init: {what}"));
        let port = |key: &str| -> Result<Option<u16>, ControllerError> {
            match map.get(key) {
                None | Some(Value::Null) => Ok(None),
                Some(v) => v
                    .as_i64()
                    .and_then(|p| u16::try_from(p).ok())
                    .map(Some)
                    .ok_or_else(|| bad(&format!("`{key}` must be a TCP port"))),
            }
        };
        let clerk_port = port("clerk_port")?.ok_or_else(|| bad("missing `clerk_port`"))?;
        let ports = map
            .get("ports")
            .and_then(Value::as_map)
            .ok_or_else(|| bad("missing `ports` table"))?;
        let ports = PortsTable::from_map(ports).map_err(|e| bad(&e.to_string()))?;
        let clusters = map
            .get("clusters")
            .and_then(Value::as_map)
            .ok_or_else(|| bad("missing `clusters`"))?
            .iter()
            .map(|(k, v)| {
                v.as_i64()
                    .filter(|n| *n > 0)
                    .map(|n| (k.clone(), n as usize))
                    .ok_or_else(|| bad(&format!("cluster `{k}` needs a positive node count")))
            })
            .collect::<Result<BTreeMap<_, _>, _>>()?;
        let functions_root = map
            .get("functions_root")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing `functions_root`"))?;
        let port_range = match map.get("port_range").and_then(Value::as_list) {
            Some([lo, hi]) => {
                let p = |v: &Value| v.as_i64().and_then(|p| u16::try_from(p).ok());
                (p(lo).ok_or_else(|| bad("port_range"))?, p(hi).ok_or_else(|| bad("port_range"))?)
            }
            Some(_) => return Err(bad("`port_range` must be [min, max]")),
            None => DEFAULT_PORT_RANGE,
        };
        Ok(InitConfig {
            host: map
                .get("host")
                .and_then(Value::as_str)
                .unwrap_or("127.0.0.1")
                .to_owned(),
            clerk_port,
            broker_port: port("broker_port")?,
            ports,
            clusters,
            functions_root: PathBuf::from(functions_root),
            port_range,
        })
    }

    pub fn to_map(&self) -> ValueMap {
        let clusters: ValueMap = self
            .clusters
            .iter()
            .map(|(k, n)| (k.clone(), Value::from(*n as u64)))
            .collect();
        let mut m = value_map! {
            "host" => self.host.clone(),
            "clerk_port" => self.clerk_port,
            "ports" => self.ports.to_map(),
            "clusters" => clusters,
            "functions_root" => self.functions_root.display().to_string(),
            "port_range" => vec![self.port_range.0, self.port_range.1],
        };
        if let Some(p) = self.broker_port {
            m.insert("broker_port".into(), Value::from(p));
        }
        m
    }

    /// Port uniqueness and range, and a scaling port for every cluster.
    pub fn validate(&self) -> Result<(), ControllerError> {
        let mut extra = vec![self.clerk_port];
        extra.extend(self.broker_port);
        self.ports
            .validate(self.port_range, &extra)
            .map_err(|e| ControllerError::Config(e.to_string()))?;
        for cluster in self.clusters.keys() {
            if !self.ports.scaling.contains_key(cluster) {
                return Err(ControllerError::Config(format!(
                    "cluster `{cluster}` has no scaling port"
                )));
            }
        }
        if let Some(extra) = self.ports.scaling.keys().find(|k| !self.clusters.contains_key(*k)) {
            return Err(ControllerError::Config(format!(
                "scaling port declared for unknown cluster `{extra}`"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{"clerk_port":7000,"broker_port":7001,"functions_root":"functions",
        "clusters":{"c1":2},
        "ports":{"gates":{"hellocot":{"push":7010,"pull":7011}},"clusters":{"c1":7020},"events":7030}}"#;

    #[test]
    fn parses_and_round_trips() {
        let c = InitConfig::from_text(SAMPLE).unwrap();
        assert_eq!(c.clerk_port, 7000);
        assert_eq!(c.broker_port, Some(7001));
        assert_eq!(c.clusters["c1"], 2);
        assert_eq!(c.ports.events_port, 7030);
        c.validate().unwrap();
        assert_eq!(InitConfig::from_map(&c.to_map()).unwrap(), c);
    }

    #[test]
    fn rejects_clerk_port_collision() {
        let text = SAMPLE.replace("\"clerk_port\":7000", "\"clerk_port\":7030");
        let c = InitConfig::from_text(&text).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_cluster_without_scaling_port() {
        let text = SAMPLE.replace("\"clusters\":{\"c1\":2}", "\"clusters\":{\"c1\":2,\"c2\":1}");
        let c = InitConfig::from_text(&text).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_missing_fields() {
        assert!(InitConfig::from_text(r#"{"clerk_port":7000}"#).is_err());
        assert!(InitConfig::from_text("not json").is_err());
    }
}
