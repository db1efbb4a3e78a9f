//! Reverse geocoding with an offline gazetteer fallback and beacon-based indoor refinement.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::num::NonZeroUsize;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use lru::LruCache;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{check_lat_lon, GeoFix};

pub const EARTH_RADIUS_KM: f64 = 6371.0;
pub const DEFAULT_GAZETTEER_RADIUS_M: f64 = 250.0;
pub const DEFAULT_CACHE_CAPACITY: usize = 4096;
pub const GEOCODE_URL_ENV: &str = "DAILYLOG_GEOCODE_URL";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("geocode provider failed: {0}")]
    Provider(String),
    #[error("no address within coverage for ({lat}, {lon})")]
    NoCoverage { lat: f64, lon: f64 },
    #[error("gazetteer: {0}")]
    Gazetteer(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AddressSource {
    #[default]
    Online,
    Offline,
    /// No positional fix; only beacon evidence, if any.
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct StructuredAddress {
    #[serde(default)]
    pub street: String,
    #[serde(default)]
    pub district: String,
    #[serde(default)]
    pub city: String,
    #[serde(default)]
    pub country: String,
    #[serde(default)]
    pub place_type: String,
    #[serde(default)]
    pub source: AddressSource,
}

impl StructuredAddress {
    pub fn has_location(&self) -> bool {
        [&self.street, &self.district, &self.city, &self.country]
            .iter()
            .any(|f| !f.is_empty())
    }

    pub fn unresolved() -> Self {
        StructuredAddress {
            source: AddressSource::Unresolved,
            ..Default::default()
        }
    }
}

impl fmt::Display for StructuredAddress {
    /// `street, district, city, country (place_type)` with empty parts skipped.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [&self.street, &self.district, &self.city, &self.country]
            .into_iter()
            .map(String::as_str)
            .filter(|s| !s.is_empty())
            .collect();
        let place = if parts.is_empty() {
            "unknown location".to_string()
        } else {
            parts.join(", ")
        };
        if self.place_type.is_empty() {
            f.write_str(&place)
        } else {
            write!(f, "{place} ({})", self.place_type)
        }
    }
}

/// Great-circle distance in metres on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = (lat2 - lat1).to_radians();
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * 1000.0 * a.sqrt().min(1.0).asin()
}

pub trait GeocodeProvider: Send + Sync {
    fn reverse(&self, lat: f64, lon: f64) -> Result<StructuredAddress, GeoError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub lat: f64,
    pub lon: f64,
    pub street: String,
    pub district: String,
    pub city: String,
    pub country: String,
    pub place_type: String,
}

impl GazetteerEntry {
    fn address(&self) -> StructuredAddress {
        StructuredAddress {
            street: self.street.clone(),
            district: self.district.clone(),
            city: self.city.clone(),
            country: self.country.clone(),
            place_type: self.place_type.clone(),
            source: AddressSource::Offline,
        }
    }
}

/// Offline coordinate → address table.
///
/// CSV layout: header `lat,lon,street,district,city,country,place_type`, one place per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
    radius_m: f64,
}

impl Gazetteer {
    pub fn new(entries: Vec<GazetteerEntry>) -> Result<Self, GeoError> {
        for e in &entries {
            check_lat_lon(e.lat, e.lon).map_err(GeoError::Gazetteer)?;
        }
        Ok(Gazetteer {
            entries,
            radius_m: DEFAULT_GAZETTEER_RADIUS_M,
        })
    }

    pub fn with_radius(mut self, radius_m: f64) -> Self {
        self.radius_m = radius_m;
        self
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, GeoError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let expected = ["lat", "lon", "street", "district", "city", "country", "place_type"];
        let headers = rdr.headers().map_err(|e| GeoError::Gazetteer(e.to_string()))?;
        if headers.iter().ne(expected.iter().copied()) {
            return Err(GeoError::Gazetteer(format!("header must be `{}`", expected.join(","))));
        }
        let entries = rdr
            .deserialize()
            .collect::<Result<Vec<GazetteerEntry>, _>>()
            .map_err(|e| GeoError::Gazetteer(e.to_string()))?;
        Gazetteer::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, GeoError> {
        let file = std::fs::File::open(path).map_err(|e| GeoError::Gazetteer(format!("{}: {e}", path.display())))?;
        Gazetteer::from_csv_reader(file)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            w.serialize(e).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
    }

    /// Nearest entry within the coverage radius.
    pub fn lookup(&self, lat: f64, lon: f64) -> Result<StructuredAddress, GeoError> {
        check_lat_lon(lat, lon).map_err(GeoError::InvalidInput)?;
        self.entries
            .iter()
            .map(|e| (haversine_m(lat, lon, e.lat, e.lon), e))
            .filter(|(d, _)| *d <= self.radius_m)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, e)| e.address())
            .ok_or(GeoError::NoCoverage { lat, lon })
    }
}

impl GeocodeProvider for Gazetteer {
    fn reverse(&self, lat: f64, lon: f64) -> Result<StructuredAddress, GeoError> {
        self.lookup(lat, lon)
    }
}

pub fn lookup_gazetteer(fix: &GeoFix, gazetteer: &Gazetteer) -> Result<StructuredAddress, GeoError> {
    gazetteer.lookup(fix.lat, fix.lon)
}

#[derive(Debug, Deserialize)]
struct HttpAddress {
    #[serde(default)]
    street: String,
    #[serde(default)]
    district: String,
    #[serde(default)]
    city: String,
    #[serde(default)]
    country: String,
    #[serde(default)]
    place_type: String,
}

/// HTTP reverse geocoder.
///
/// Request: `GET {url}?lat=<deg>&lon=<deg>`.
/// Response: a JSON object with optional string fields
/// `street`, `district`, `city`, `country`, `place_type`.
pub struct HttpGeocoder {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpGeocoder {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, GeoError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GeoError::Provider(e.to_string()))?;
        Ok(HttpGeocoder {
            url: url.into(),
            client,
        })
    }
}

impl GeocodeProvider for HttpGeocoder {
    fn reverse(&self, lat: f64, lon: f64) -> Result<StructuredAddress, GeoError> {
        let resp = self
            .client
            .get(&self.url)
            .query(&[("lat", lat), ("lon", lon)])
            .send()
            .map_err(|e| GeoError::Provider(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(GeoError::Provider(format!("HTTP {}", status.as_u16())));
        }
        let body: HttpAddress = resp
            .json()
            .map_err(|e| GeoError::Provider(format!("bad response body: {e}")))?;
        let addr = StructuredAddress {
            street: body.street,
            district: body.district,
            city: body.city,
            country: body.country,
            place_type: body.place_type,
            source: AddressSource::Online,
        };
        if !addr.has_location() {
            return Err(GeoError::Provider("response carried no address fields".into()));
        }
        Ok(addr)
    }
}

/// Provider plus optional offline fallback, memoised by coordinates rounded to 4 decimals.
pub struct Geocoder {
    provider: Option<Box<dyn GeocodeProvider>>,
    fallback: Option<Gazetteer>,
    cache: Mutex<LruCache<(i64, i64), StructuredAddress>>,
}

impl Geocoder {
    pub fn new(provider: Option<Box<dyn GeocodeProvider>>, fallback: Option<Gazetteer>) -> Self {
        Self::with_capacity(provider, fallback, DEFAULT_CACHE_CAPACITY)
    }

    pub fn with_capacity(
        provider: Option<Box<dyn GeocodeProvider>>,
        fallback: Option<Gazetteer>,
        capacity: usize,
    ) -> Self {
        let cap = NonZeroUsize::new(capacity).unwrap_or(NonZeroUsize::MIN);
        Geocoder {
            provider,
            fallback,
            cache: Mutex::new(LruCache::new(cap)),
        }
    }

    pub fn offline(gazetteer: Gazetteer) -> Self {
        Self::new(None, Some(gazetteer))
    }

    pub fn reverse_geocode(&self, fix: &GeoFix) -> Result<StructuredAddress, GeoError> {
        check_lat_lon(fix.lat, fix.lon).map_err(GeoError::InvalidInput)?;
        let key = ((fix.lat * 1e4).round() as i64, (fix.lon * 1e4).round() as i64);
        if let Some(hit) = self.cache.lock().expect("geocode cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let provider_result = match &self.provider {
            Some(p) => p.reverse(fix.lat, fix.lon),
            None => Err(GeoError::Provider("no online provider configured".into())),
        };
        let result = match (provider_result, &self.fallback) {
            (Ok(addr), _) => Ok(addr),
            (Err(_), Some(gaz)) => gaz.lookup(fix.lat, fix.lon),
            (Err(e), None) => Err(e),
        }?;
        self.cache
            .lock()
            .expect("geocode cache poisoned")
            .put(key, result.clone());
        Ok(result)
    }

    pub fn cached_len(&self) -> usize {
        self.cache.lock().expect("geocode cache poisoned").len()
    }
}

pub fn reverse_geocode(fix: &GeoFix, geocoder: &Geocoder) -> Result<StructuredAddress, GeoError> {
    geocoder.reverse_geocode(fix)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeaconLocation {
    pub building: String,
    pub floor: i32,
    #[serde(default)]
    pub room: String,
}

impl BeaconLocation {
    fn describe(&self) -> String {
        let mut s = format!("Building {}, floor {}", self.building, self.floor);
        if !self.room.is_empty() {
            s.push_str(", room ");
            s.push_str(&self.room);
        }
        s
    }
}

/// Known Wi-Fi SSIDs and Bluetooth MACs mapped to indoor positions.
///
/// File format: JSON object `{"<ssid or mac>": {"building": str, "floor": int, "room": str}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeaconMap {
    pub entries: BTreeMap<String, BeaconLocation>,
}

impl BeaconMap {
    pub fn load(path: &Path) -> Result<Self, GeoError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GeoError::InvalidInput(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| GeoError::InvalidInput(format!("beacon map: {e}")))
    }
}

pub fn refine_with_beacons(addr: StructuredAddress, fix: &GeoFix, beacons: &BeaconMap) -> StructuredAddress {
    refine_with_observations(addr, &fix.wifi_ssids, &fix.bt_macs, beacons)
}

/// Appends the indoor position of the first observed beacon (in sorted key order) to `place_type`.
pub fn refine_with_observations(
    mut addr: StructuredAddress,
    ssids: &[String],
    macs: &[String],
    beacons: &BeaconMap,
) -> StructuredAddress {
    let observed = |key: &str| ssids.iter().any(|s| s == key) || macs.iter().any(|m| m.eq_ignore_ascii_case(key));
    if let Some((_, loc)) = beacons.entries.iter().find(|(k, _)| observed(k)) {
        let indoor = loc.describe();
        if addr.place_type.is_empty() {
            addr.place_type = indoor;
        } else {
            addr.place_type = format!("{}; {indoor}", addr.place_type);
        }
    }
    addr
}

/// Resolves a window's location from GPS when present, falling back to beacons alone.
pub fn locate(
    geocoder: &Geocoder,
    fix: Option<&GeoFix>,
    ssids: &[String],
    macs: &[String],
    beacons: &BeaconMap,
) -> Result<StructuredAddress, GeoError> {
    let base = match fix {
        Some(f) => geocoder.reverse_geocode(f)?,
        None => StructuredAddress::unresolved(),
    };
    Ok(refine_with_observations(base, ssids, macs, beacons))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Stub {
        result: Result<StructuredAddress, GeoError>,
        calls: Arc<AtomicUsize>,
    }

    impl GeocodeProvider for Stub {
        fn reverse(&self, _lat: f64, _lon: f64) -> Result<StructuredAddress, GeoError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.result.clone()
        }
    }

    fn hanover() -> StructuredAddress {
        StructuredAddress {
            city: "Hanover".into(),
            country: "US".into(),
            ..Default::default()
        }
    }

    fn entry(lat: f64, lon: f64, street: &str) -> GazetteerEntry {
        GazetteerEntry {
            lat,
            lon,
            street: street.into(),
            district: String::new(),
            city: "Hanover".into(),
            country: "US".into(),
            place_type: "library".into(),
        }
    }

    // Spherical law of cosines, an independent route to the same great-circle distance.
    fn cosine_law_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
        let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
        let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * (lon2 - lon1).to_radians().cos();
        EARTH_RADIUS_KM * 1000.0 * c.clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn haversine_agrees_with_cosine_law() {
        for (a, b, c, d) in [
            (43.70, -72.29, 43.71, -72.28),
            (0.0, 0.0, 1.0, 1.0),
            (51.5, -0.12, 48.85, 2.35),
        ] {
            let h = haversine_m(a, b, c, d);
            assert!((h - cosine_law_m(a, b, c, d)).abs() < 1e-3 * h.max(1.0), "{h}");
        }
        // One degree of latitude is R·π/180.
        let deg = haversine_m(10.0, 20.0, 11.0, 20.0);
        assert!((deg - 6_371_000.0 * std::f64::consts::PI / 180.0).abs() < 1e-6);
    }

    #[test]
    fn provider_passthrough() {
        let calls = Arc::new(AtomicUsize::new(0));
        let g = Geocoder::new(
            Some(Box::new(Stub {
                result: Ok(hanover()),
                calls: calls.clone(),
            })),
            None,
        );
        let fix = GeoFix::new(43.7, -72.29).unwrap();
        assert_eq!(g.reverse_geocode(&fix).unwrap(), hanover());
    }

    #[test]
    fn provider_failure_falls_back_offline() {
        let calls = Arc::new(AtomicUsize::new(0));
        let gaz = Gazetteer::new(vec![entry(43.7, -72.29, "Main St")]).unwrap();
        let g = Geocoder::new(
            Some(Box::new(Stub {
                result: Err(GeoError::Provider("timeout".into())),
                calls,
            })),
            Some(gaz),
        );
        let addr = g.reverse_geocode(&GeoFix::new(43.7, -72.29).unwrap()).unwrap();
        assert_eq!(addr.street, "Main St");
        assert_eq!(addr.source, AddressSource::Offline);
    }

    #[test]
    fn invalid_latitude_is_input_error() {
        let g = Geocoder::new(None, None);
        let fix = GeoFix {
            lat: 91.0,
            lon: 0.0,
            pressure_hpa: None,
            wifi_ssids: vec![],
            bt_macs: vec![],
        };
        assert!(matches!(g.reverse_geocode(&fix), Err(GeoError::InvalidInput(_))));
    }

    #[test]
    fn cache_dedups_rounded_coordinates() {
        let calls = Arc::new(AtomicUsize::new(0));
        let g = Geocoder::new(
            Some(Box::new(Stub {
                result: Ok(hanover()),
                calls: calls.clone(),
            })),
            None,
        );
        g.reverse_geocode(&GeoFix::new(43.70001, -72.29001).unwrap()).unwrap();
        g.reverse_geocode(&GeoFix::new(43.70002, -72.29002).unwrap()).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        g.reverse_geocode(&GeoFix::new(43.7002, -72.29).unwrap()).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn gazetteer_radius_and_nearest() {
        let gaz = Gazetteer::new(vec![entry(43.7, -72.29, "A")]).unwrap();
        assert_eq!(gaz.lookup(43.7, -72.29).unwrap().street, "A");
        // 1 km north: 1000 m / R radians of latitude.
        let dlat = (1000.0 / 6_371_000.0f64).to_degrees();
        assert!((haversine_m(43.7, -72.29, 43.7 + dlat, -72.29) - 1000.0).abs() < 1e-6);
        assert!(matches!(
            gaz.lookup(43.7 + dlat, -72.29),
            Err(GeoError::NoCoverage { .. })
        ));

        let two = Gazetteer::new(vec![entry(43.7, -72.29, "A"), entry(43.701, -72.29, "B")]).unwrap();
        // 0.0007° from A (≈78 m) and 0.0003° from B (≈33 m).
        assert_eq!(two.lookup(43.7007, -72.29).unwrap().street, "B");
    }

    #[test]
    fn gazetteer_csv_round_trip() {
        let gaz = Gazetteer::new(vec![entry(43.7, -72.29, "Main St, Suite 2")]).unwrap();
        let back = Gazetteer::from_csv_reader(gaz.to_csv().as_bytes()).unwrap();
        assert_eq!(back.entries(), gaz.entries());
        assert!(Gazetteer::from_csv_reader("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn beacon_refinement() {
        let mut beacons = BeaconMap::default();
        beacons.entries.insert(
            "CSE-3F".into(),
            BeaconLocation {
                building: "CSE".into(),
                floor: 3,
                room: String::new(),
            },
        );
        let mut fix = GeoFix::new(43.7, -72.29).unwrap();
        fix.wifi_ssids = vec!["CSE-3F".into()];
        let out = refine_with_beacons(hanover(), &fix, &beacons);
        assert!(out.place_type.contains("Building CSE, floor 3"));
        assert_eq!(out.city, "Hanover");

        assert_eq!(refine_with_beacons(hanover(), &fix, &BeaconMap::default()), hanover());

        beacons.entries.insert(
            "AAA-B1".into(),
            BeaconLocation {
                building: "AAA".into(),
                floor: -1,
                room: "B12".into(),
            },
        );
        fix.wifi_ssids.push("AAA-B1".into());
        let out = refine_with_beacons(hanover(), &fix, &beacons);
        assert_eq!(out.place_type, "Building AAA, floor -1, room B12");
    }

    #[test]
    fn address_display() {
        let mut a = hanover();
        assert_eq!(a.to_string(), "Hanover, US");
        a.place_type = "library".into();
        assert_eq!(a.to_string(), "Hanover, US (library)");
        assert_eq!(StructuredAddress::default().to_string(), "unknown location");
    }
}
