use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use tokio::sync::mpsc;
use tokio_util::sync::CancellationToken;

use super::{Channel, EndpointAddress, Listener, Scheme, Transport, TransportError, CHANNEL_QUEUE_FRAMES};

/// Registry of bound `mem` names. Each namespace is isolated, so parallel
/// tests never collide.
#[derive(Clone, Default)]
pub struct MemNamespace {
    inner: Arc<NamespaceInner>,
}

#[derive(Default)]
struct NamespaceInner {
    bound: Mutex<HashMap<String, Binding>>,
    next_id: AtomicU64,
}

struct Binding {
    id: u64,
    accept_tx: mpsc::UnboundedSender<Channel>,
}

struct Registration {
    namespace: MemNamespace,
    name: String,
    id: u64,
}

impl Drop for Registration {
    fn drop(&mut self) {
        let mut bound = self.namespace.inner.bound.lock().unwrap();
        if bound.get(&self.name).is_some_and(|b| b.id == self.id) {
            bound.remove(&self.name);
        }
    }
}

impl MemNamespace {
    pub fn new() -> Self {
        MemNamespace::default()
    }

    pub fn is_bound(&self, name: &str) -> bool {
        self.inner.bound.lock().unwrap().contains_key(name)
    }
}

/// In-process transport. A channel pair is two bounded queues cross-wired,
/// sharing one fault token.
pub struct MemTransport {
    namespace: MemNamespace,
}

impl MemTransport {
    pub fn new(namespace: MemNamespace) -> Self {
        MemTransport { namespace }
    }

    pub fn namespace(&self) -> &MemNamespace {
        &self.namespace
    }
}

pub(crate) fn mem_pair(client_peer: EndpointAddress, server_peer: EndpointAddress) -> (Channel, Channel) {
    let (a_tx, b_rx) = mpsc::channel(CHANNEL_QUEUE_FRAMES);
    let (b_tx, a_rx) = mpsc::channel(CHANNEL_QUEUE_FRAMES);
    let fault = CancellationToken::new();
    let a = Channel::from_parts(Scheme::Mem, client_peer, a_tx, a_rx, Some(fault.clone()), None);
    let b = Channel::from_parts(Scheme::Mem, server_peer, b_tx, b_rx, Some(fault), None);
    (a, b)
}

#[async_trait]
impl Transport for MemTransport {
    fn scheme(&self) -> Scheme {
        Scheme::Mem
    }

    async fn listen(&self, addr: &EndpointAddress) -> Result<Listener, TransportError> {
        let EndpointAddress::Mem(name) = addr else {
            return Err(TransportError::UnsupportedScheme(addr.scheme().to_string()));
        };
        let mut bound = self.namespace.inner.bound.lock().unwrap();
        if bound.contains_key(name) {
            return Err(TransportError::AddressInUse(addr.to_string()));
        }
        let id = self.namespace.inner.next_id.fetch_add(1, Ordering::Relaxed);
        let (accept_tx, accept_rx) = mpsc::unbounded_channel();
        bound.insert(name.clone(), Binding { id, accept_tx });
        let registration = Registration {
            namespace: self.namespace.clone(),
            name: name.clone(),
            id,
        };
        Ok(Listener::new(addr.clone(), accept_rx, Box::new(registration)))
    }

    async fn connect(&self, addr: &EndpointAddress) -> Result<Channel, TransportError> {
        let EndpointAddress::Mem(name) = addr else {
            return Err(TransportError::UnsupportedScheme(addr.scheme().to_string()));
        };
        let bound = self.namespace.inner.bound.lock().unwrap();
        let binding = bound
            .get(name)
            .ok_or_else(|| TransportError::ConnectionRefused(addr.to_string()))?;
        let n = self.namespace.inner.next_id.fetch_add(1, Ordering::Relaxed);
        let (client, server) = mem_pair(addr.clone(), EndpointAddress::mem(format!("{name}#{n}")));
        binding
            .accept_tx
            .send(server)
            .map_err(|_| TransportError::ConnectionRefused(addr.to_string()))?;
        Ok(client)
    }
}
