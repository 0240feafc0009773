//! Core domain types and CSV ingestion for electricity profiles and travel
//! times.

mod electricity;
mod grid;
mod profile;
mod travel;

pub(crate) use electricity::check_header;
pub use electricity::{
    format_timestamp, load_electricity_csv, parse_timestamp, read_electricity, write_electricity,
    write_electricity_csv, DroppedHousehold, IngestReport, ELECTRICITY_HEADER,
};
pub use grid::{format_clock, parse_clock, TimeGrid, MINUTES_PER_DAY};
pub use profile::{filter_calendar, normalize_profile, DailyProfile, ProfilePanel, WeekdayName};
pub use travel::{
    load_travel_time_csv, load_travel_time_csv_on, read_travel_time, write_travel_time,
    TravelTimeSeries, TRAVEL_HEADER,
};
