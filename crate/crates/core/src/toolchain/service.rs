use std::collections::BTreeMap;
use std::net::SocketAddr;

use crate::serve::HttpServerHandle;
use crate::warehouse::ServerEntry;

use super::Toolchain;

/// The toolchain's servers, each on its own HTTP listener.
pub struct ToolchainServices {
    handles: BTreeMap<String, HttpServerHandle>,
}

impl ToolchainServices {
    /// Serves every server of `toolchain`. Servers missing from `addrs`
    /// listen on an ephemeral localhost port.
    pub fn spawn(toolchain: &Toolchain, addrs: &BTreeMap<String, SocketAddr>) -> std::io::Result<Self> {
        let mut handles = BTreeMap::new();
        for server in toolchain.servers() {
            let addr = addrs
                .get(server.id())
                .copied()
                .unwrap_or_else(|| SocketAddr::from(([127, 0, 0, 1], 0)));
            let server = server.clone();
            let id = server.id().to_owned();
            let handle = HttpServerHandle::spawn_with(addr, |base| crate::trs::http::router(server, base))?;
            handles.insert(id, handle);
        }
        Ok(ToolchainServices { handles })
    }

    pub fn base_url(&self, server_id: &str) -> Option<String> {
        self.handles.get(server_id).map(HttpServerHandle::base_url)
    }

    /// Warehouse entries pointing at these services.
    pub fn server_entries(&self, poll_period_ms: u64) -> Vec<ServerEntry> {
        self.handles
            .iter()
            .map(|(id, h)| ServerEntry::new(id.clone(), h.base_url()).with_poll_period(poll_period_ms))
            .collect()
    }

    pub fn shutdown(self) {
        for (_, h) in self.handles {
            h.shutdown();
        }
    }
}
