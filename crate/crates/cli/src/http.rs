//! `GET /rooms` for browsers, which cannot hear UDP beacons, plus the
//! static files of the web client.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use roomkit::discovery::{RoomAdvertisement, Scanner};
use serde_json::json;
use tokio::sync::watch;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

pub struct RoomsState {
    /// This host's advertisement; `None` until the room is open.
    pub own: watch::Receiver<Option<RoomAdvertisement>>,
    /// Rooms heard from other hosts.
    pub scanner: Option<Scanner>,
}

async fn rooms(State(state): State<Arc<RoomsState>>) -> Response {
    let Some(own) = state.own.borrow().clone() else {
        return (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "error": "room not open" }))).into_response();
    };
    let mut list = vec![own.clone()];
    if let Some(s) = &state.scanner {
        list.extend(s.rooms().into_iter().filter(|r| r.room_id != own.room_id));
    }
    Json(list).into_response()
}

pub fn router(state: Arc<RoomsState>, web_root: Option<PathBuf>) -> Router {
    let mut app = Router::new().route("/rooms", get(rooms)).with_state(state);
    if let Some(root) = web_root {
        app = app.fallback_service(ServeDir::new(root));
    }
    app.layer(CorsLayer::new().allow_origin(Any).allow_methods(Any))
}

pub async fn serve(listener: tokio::net::TcpListener, app: Router) {
    if let Err(e) = axum::serve(listener, app).await {
        log::error!("http server: {e}");
    }
}
