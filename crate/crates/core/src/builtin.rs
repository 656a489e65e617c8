//! Templates shipped with the crate.

pub const LAVA: &str = include_str!("../templates/lava.xml");
/// Lava with grid sizes 3 to 10.
pub const LAVA_DESK: &str = include_str!("../templates/lava_desk.xml");
pub const POINTNAV: &str = include_str!("../templates/pointnav.xml");

/// Built-in template text by name.
pub fn template(name: &str) -> Option<&'static str> {
    match name {
        "lava" => Some(LAVA),
        "lava_desk" => Some(LAVA_DESK),
        "pointnav" => Some(POINTNAV),
        _ => None,
    }
}
