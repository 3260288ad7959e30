use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::TransportError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Mem,
    Tcp,
    Ws,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Mem => "mem",
            Scheme::Tcp => "tcp",
            Scheme::Ws => "ws",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = TransportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mem" => Ok(Scheme::Mem),
            "tcp" => Ok(Scheme::Tcp),
            "ws" => Ok(Scheme::Ws),
            other => Err(TransportError::UnsupportedScheme(other.to_owned())),
        }
    }
}

/// Transport-neutral address, written `scheme://target`.
///
/// `mem` targets are registry names; `tcp` and `ws` targets are `host:port`
/// (IPv6 hosts in brackets).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EndpointAddress {
    Mem(String),
    Tcp { host: String, port: u16 },
    Ws { host: String, port: u16 },
}

impl EndpointAddress {
    pub fn mem(name: impl Into<String>) -> Self {
        EndpointAddress::Mem(name.into())
    }

    pub fn tcp(host: impl Into<String>, port: u16) -> Self {
        EndpointAddress::Tcp {
            host: host.into(),
            port,
        }
    }

    pub fn ws(host: impl Into<String>, port: u16) -> Self {
        EndpointAddress::Ws {
            host: host.into(),
            port,
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            EndpointAddress::Mem(_) => Scheme::Mem,
            EndpointAddress::Tcp { .. } => Scheme::Tcp,
            EndpointAddress::Ws { .. } => Scheme::Ws,
        }
    }

    /// `host:port` for socket schemes.
    pub fn socket_target(&self) -> Option<String> {
        match self {
            EndpointAddress::Mem(_) => None,
            EndpointAddress::Tcp { host, port } | EndpointAddress::Ws { host, port } => {
                Some(host_port(host, *port))
            }
        }
    }

    pub fn port(&self) -> Option<u16> {
        match self {
            EndpointAddress::Mem(_) => None,
            EndpointAddress::Tcp { port, .. } | EndpointAddress::Ws { port, .. } => Some(*port),
        }
    }

    /// Same scheme and host with a different port.
    pub fn with_port(&self, new_port: u16) -> Self {
        match self {
            EndpointAddress::Mem(n) => EndpointAddress::Mem(n.clone()),
            EndpointAddress::Tcp { host, .. } => EndpointAddress::tcp(host.clone(), new_port),
            EndpointAddress::Ws { host, .. } => EndpointAddress::ws(host.clone(), new_port),
        }
    }

    /// Same scheme and port with a different host.
    pub fn with_host(&self, new_host: impl Into<String>) -> Self {
        match self {
            EndpointAddress::Mem(n) => EndpointAddress::Mem(n.clone()),
            EndpointAddress::Tcp { port, .. } => EndpointAddress::tcp(new_host, *port),
            EndpointAddress::Ws { port, .. } => EndpointAddress::ws(new_host, *port),
        }
    }
}

fn host_port(host: &str, port: u16) -> String {
    if host.contains(':') {
        format!("[{host}]:{port}")
    } else {
        format!("{host}:{port}")
    }
}

impl fmt::Display for EndpointAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EndpointAddress::Mem(name) => write!(f, "mem://{name}"),
            EndpointAddress::Tcp { host, port } => write!(f, "tcp://{}", host_port(host, *port)),
            EndpointAddress::Ws { host, port } => write!(f, "ws://{}", host_port(host, *port)),
        }
    }
}

impl FromStr for EndpointAddress {
    type Err = TransportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || TransportError::InvalidAddress(s.to_owned());
        let (scheme, target) = s.split_once("://").ok_or_else(invalid)?;
        let scheme: Scheme = scheme.parse()?;
        if target.is_empty() {
            return Err(invalid());
        }
        if scheme == Scheme::Mem {
            return Ok(EndpointAddress::Mem(target.to_owned()));
        }
        let (host, port) = target.rsplit_once(':').ok_or_else(invalid)?;
        let port: u16 = port.parse().map_err(|_| invalid())?;
        let host = match host.strip_prefix('[') {
            Some(rest) => rest.strip_suffix(']').ok_or_else(invalid)?,
            None if host.contains(':') => return Err(invalid()),
            None => host,
        };
        if host.is_empty() || host.contains('/') {
            return Err(invalid());
        }
        Ok(match scheme {
            Scheme::Tcp => EndpointAddress::tcp(host, port),
            Scheme::Ws => EndpointAddress::ws(host, port),
            Scheme::Mem => unreachable!(),
        })
    }
}

impl Serialize for EndpointAddress {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EndpointAddress {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
