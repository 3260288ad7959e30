use std::time::Duration;

use roomkit::discovery::{scan, AdvertiseMedium, RoomAdvertisement};

use crate::exit;

/// One line per room: id, name, occupancy, endpoints.
pub fn format_rooms(rooms: &[RoomAdvertisement]) -> String {
    if rooms.is_empty() {
        return "no rooms found\n".into();
    }
    let mut out = String::new();
    for r in rooms {
        let endpoints: Vec<String> = r.endpoints.iter().map(|e| e.to_string()).collect();
        out.push_str(&format!(
            "{}  {}  {}/{}  {}\n",
            r.room_id,
            r.room_name,
            r.occupied,
            r.capacity,
            endpoints.join(",")
        ));
    }
    out
}

pub async fn cmd_scan(medium: AdvertiseMedium, window: Duration, json: bool) -> i32 {
    match scan(&medium, window).await {
        Ok(rooms) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&rooms).expect("ads serialize"));
            } else {
                print!("{}", format_rooms(&rooms));
            }
            exit::OK
        }
        Err(e) => {
            eprintln!("scan failed: {e}");
            exit::ENVIRONMENT
        }
    }
}
