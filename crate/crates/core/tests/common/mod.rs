//! Fixture databases shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

use cyclesql::db::{introspect_schema, Gateway};
use cyclesql::schema::{DatabaseSchema, SpiderTables};
use rusqlite::Connection;
use tempfile::TempDir;

/// A Spider-style directory holding one or more fixture databases.
pub struct Fixture {
    pub dir: TempDir,
    pub gateway: Gateway,
}

impl Fixture {
    pub fn schema(&self, db_id: &str) -> &DatabaseSchema {
        self.gateway.schema(db_id).expect("fixture schema")
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }
}

pub struct DbSpec<'a> {
    pub db_id: &'a str,
    pub script: &'a str,
    /// `("table", noun)` or `("table.column", noun)` natural-name overrides.
    pub natural_names: &'a [(&'a str, &'a str)],
}

/// Creates every database, then writes a `tables.json` describing them.
pub fn build(specs: &[DbSpec<'_>]) -> Fixture {
    let dir = TempDir::new().expect("tempdir");
    let mut entries = Vec::new();
    for spec in specs {
        let db_dir = dir.path().join("database").join(spec.db_id);
        std::fs::create_dir_all(&db_dir).expect("mkdir");
        let conn = Connection::open(db_dir.join(format!("{}.sqlite", spec.db_id))).expect("create db");
        conn.execute_batch(spec.script).expect("fixture script");
        let mut schema = introspect_schema(&conn, spec.db_id).expect("introspect");
        for (key, noun) in spec.natural_names {
            match key.split_once('.') {
                Some((t, c)) => {
                    let table = schema.tables.iter_mut().find(|x| x.name.eq_ignore_ascii_case(t)).expect("table");
                    let col = table.columns.iter_mut().find(|x| x.name.eq_ignore_ascii_case(c)).expect("column");
                    col.natural_name = Some(noun.to_string());
                }
                None => {
                    let table = schema.tables.iter_mut().find(|x| x.name.eq_ignore_ascii_case(key)).expect("table");
                    table.natural_name = Some(noun.to_string());
                }
            }
        }
        entries.push(SpiderTables::from_schema(&schema));
    }
    std::fs::write(dir.path().join("tables.json"), serde_json::to_string_pretty(&entries).unwrap()).unwrap();
    let gateway = Gateway::open_root(dir.path()).expect("gateway");
    Fixture { dir, gateway }
}

pub const FLIGHT_SCRIPT: &str = "
CREATE TABLE aircraft (
    aid number(9,0) PRIMARY KEY,
    name varchar2(30),
    distance number(6,0)
);
CREATE TABLE flight (
    flno number(4,0) PRIMARY KEY,
    origin varchar2(20),
    destination varchar2(20),
    aid number(9,0),
    FOREIGN KEY (aid) REFERENCES aircraft(aid)
);
INSERT INTO aircraft VALUES
    (1, 'Boeing 747-400', 8430),
    (2, 'Boeing 737-800', 3383),
    (3, 'Airbus A340-300', 7120),
    (4, 'British Aerospace Jetstream 41', 1502),
    (5, 'Embraer ERJ-145', 1530),
    (6, 'SAAB 340', 2128),
    (7, 'Piper Archer III', 520),
    (8, 'Tupolev 154', 4103),
    (9, 'Lockheed L1011', 6900),
    (10, 'Boeing 757-300', 4010);
INSERT INTO flight (aid, flno, origin, destination) VALUES
    (9, 2, 'Los Angeles', 'Tokyo'),
    (3, 7, 'Los Angeles', 'Sydney'),
    (3, 13, 'Los Angeles', 'Chicago'),
    (10, 68, 'Chicago', 'New York'),
    (9, 76, 'Chicago', 'Los Angeles'),
    (7, 33, 'Los Angeles', 'Honolulu'),
    (5, 34, 'Los Angeles', 'Honolulu'),
    (1, 99, 'Los Angeles', 'Washington D.C.'),
    (2, 346, 'Los Angeles', 'Dallas'),
    (6, 387, 'Los Angeles', 'Boston');
";

pub const FLIGHT_NAMES: &[(&str, &str)] =
    &[("flight.flno", "flight number"), ("flight.aid", "aircraft id"), ("aircraft.aid", "aircraft id")];

/// The incorrect translation from the running flight example and its gold.
pub const FIG2_WRONG_SQL: &str =
    "SELECT count(T1.flno) FROM Flight AS T1 JOIN Aircraft AS T2 ON T1.aid = T2.aid WHERE T2.name = 'Airbus A340-300'";
pub const FIG2_GOLD_SQL: &str =
    "SELECT T1.flno FROM Flight AS T1 JOIN Aircraft AS T2 ON T1.aid = T2.aid WHERE T2.name = 'Airbus A340-300'";
pub const FIG2_QUESTION: &str = "What are the numbers of all flights that can be operated by Airbus A340-300?";

pub fn flight_fixture() -> Fixture {
    build(&[DbSpec { db_id: "flight_1", script: FLIGHT_SCRIPT, natural_names: FLIGHT_NAMES }])
}

pub const WORLD_SCRIPT: &str = "
CREATE TABLE country (
    Code char(3) NOT NULL DEFAULT '' PRIMARY KEY,
    Name char(52) NOT NULL DEFAULT '',
    Continent text NOT NULL DEFAULT 'Asia',
    Region char(26) NOT NULL DEFAULT '',
    Population INTEGER NOT NULL DEFAULT 0,
    Code2 char(2) NOT NULL DEFAULT ''
);
CREATE TABLE city (
    ID INTEGER PRIMARY KEY,
    Name char(35) NOT NULL DEFAULT '',
    CountryCode char(3) NOT NULL DEFAULT '',
    District char(20) NOT NULL DEFAULT '',
    Population INTEGER NOT NULL DEFAULT 0,
    FOREIGN KEY (CountryCode) REFERENCES country(Code)
);
CREATE TABLE countrylanguage (
    CountryCode char(3) NOT NULL DEFAULT '',
    Language char(30) NOT NULL DEFAULT '',
    IsOfficial text NOT NULL DEFAULT 'F',
    Percentage float(4,1) NOT NULL DEFAULT 0.0,
    PRIMARY KEY (CountryCode, Language),
    FOREIGN KEY (CountryCode) REFERENCES country(Code)
);
INSERT INTO country VALUES
    ('ABW', 'Aruba', 'North America', 'Caribbean', 103000, 'AW'),
    ('AIA', 'Anguilla', 'North America', 'Caribbean', 8000, 'AI'),
    ('CAN', 'Canada', 'North America', 'North America', 31147000, 'CA'),
    ('DEU', 'Germany', 'Europe', 'Western Europe', 82164700, 'DE'),
    ('FRA', 'France', 'Europe', 'Western Europe', 59225700, 'FR'),
    ('GBR', 'United Kingdom', 'Europe', 'British Islands', 59623400, 'GB'),
    ('IRQ', 'Iraq', 'Asia', 'Middle East', 23115000, 'IQ'),
    ('RUS', 'Russian Federation', 'Europe', 'Eastern Europe', 146934000, 'RU'),
    ('SYC', 'Seychelles', 'Africa', 'Eastern Africa', 77000, 'SC'),
    ('VUT', 'Vanuatu', 'Oceania', 'Melanesia', 190000, 'VU');
INSERT INTO city (ID, Name, CountryCode, District, Population) VALUES
    (129, 'Oranjestad', 'ABW', '–', 29034),
    (62, 'The Valley', 'AIA', '–', 595),
    (1822, 'Ottawa', 'CAN', 'Ontario', 335277),
    (3068, 'Berlin', 'DEU', 'Berliini', 3386667),
    (2974, 'Paris', 'FRA', 'Île-de-France', 2125246),
    (456, 'London', 'GBR', 'England', 7285000),
    (1365, 'Baghdad', 'IRQ', 'Baghdad', 4336000),
    (3580, 'Moscow', 'RUS', 'Moscow (City)', 8389200),
    (3622, 'Nabereznyje Tšelny', 'RUS', 'Tatarstan', 523000),
    (3206, 'Victoria', 'SYC', 'Mahé', 41000),
    (3537, 'Port-Vila', 'VUT', 'Shefa', 33700);
INSERT INTO countrylanguage VALUES
    ('ABW', 'Dutch', 'T', 5.3), ('ABW', 'English', 'F', 9.5),
    ('ABW', 'Papiamento', 'F', 76.7), ('ABW', 'Spanish', 'F', 7.4),
    ('AIA', 'English', 'T', 0.0),
    ('CAN', 'Chinese', 'F', 2.5), ('CAN', 'English', 'T', 60.4), ('CAN', 'French', 'T', 23.4),
    ('CAN', 'German', 'F', 1.6), ('CAN', 'Italian', 'F', 1.7),
    ('DEU', 'German', 'T', 91.3), ('DEU', 'Turkish', 'F', 2.6), ('DEU', 'Italian', 'F', 0.7),
    ('FRA', 'French', 'T', 93.6), ('FRA', 'Arabic', 'F', 2.5), ('FRA', 'Portuguese', 'F', 1.2),
    ('GBR', 'English', 'T', 97.3), ('GBR', 'Kymri', 'F', 0.9),
    ('IRQ', 'Arabic', 'T', 77.2), ('IRQ', 'Assyrian', 'F', 0.8), ('IRQ', 'Azerbaijani', 'F', 1.7),
    ('IRQ', 'Kurdish', 'F', 19.0), ('IRQ', 'Persian', 'F', 0.8),
    ('RUS', 'Russian', 'T', 86.6), ('RUS', 'Tatar', 'F', 3.2), ('RUS', 'Ukrainian', 'F', 1.3),
    ('SYC', 'English', 'T', 3.8), ('SYC', 'French', 'T', 1.3), ('SYC', 'Seselwa', 'F', 91.3),
    ('VUT', 'Bislama', 'T', 56.6), ('VUT', 'English', 'T', 28.3), ('VUT', 'French', 'T', 14.2);
";

pub const WORLD_NAMES: &[(&str, &str)] = &[
    ("countrylanguage", "country language"),
    ("countrylanguage.CountryCode", "country code"),
    ("countrylanguage.IsOfficial", "is official"),
    ("city.CountryCode", "country code"),
];

pub fn world_fixture() -> Fixture {
    build(&[DbSpec { db_id: "world_1", script: WORLD_SCRIPT, natural_names: WORLD_NAMES }])
}

/// The case-study queries over the world database. The first one gains the
/// join condition its published form leaves out.
pub const Q1: &str = "SELECT count(T2.Language) FROM Country AS T1 JOIN Countrylanguage AS T2 ON T1.Code = T2.CountryCode WHERE T1.name = 'Aruba'";
pub const Q2: &str = "SELECT continent FROM Country WHERE name = 'Anguilla'";
pub const Q3: &str = "SELECT T1.name FROM Country AS T1 JOIN Countrylanguage AS T2 ON T1.code = T2.countrycode WHERE T2.language = 'English' INTERSECT SELECT T1.name FROM Country AS T1 JOIN Countrylanguage AS T2 ON T1.code = T2.countrycode WHERE T2.language = 'French'";
pub const Q4: &str = "SELECT DISTINCT T2.name FROM Country AS T1 JOIN City AS T2 ON T1.code = T2.countrycode WHERE T1.Continent = 'Europe' AND T1.Name NOT IN (SELECT T3.name FROM Country AS T3 JOIN Countrylanguage AS T4 ON T3.code = T4.countrycode WHERE T4.isofficial = 'T' AND T4.language = 'English')";
pub const Q5: &str = "SELECT count(T2.language), T1.name FROM Country AS T1 JOIN Countrylanguage AS T2 ON T1.code = T2.countrycode GROUP BY T1.name HAVING count(*) > 2";

pub const CONCERT_SCRIPT: &str = "
CREATE TABLE stadium (
    Stadium_ID int PRIMARY KEY,
    Location text,
    Name text,
    Capacity int
);
CREATE TABLE singer (
    Singer_ID int PRIMARY KEY,
    Name text,
    Country text,
    Age int
);
CREATE TABLE concert (
    concert_ID int PRIMARY KEY,
    concert_Name text,
    Theme text,
    Stadium_ID text,
    Year text,
    FOREIGN KEY (Stadium_ID) REFERENCES stadium(Stadium_ID)
);
CREATE TABLE singer_in_concert (
    concert_ID int,
    Singer_ID text,
    PRIMARY KEY (concert_ID, Singer_ID),
    FOREIGN KEY (concert_ID) REFERENCES concert(concert_ID),
    FOREIGN KEY (Singer_ID) REFERENCES singer(Singer_ID)
);
INSERT INTO stadium VALUES (1, 'Raith Rovers', 'Stark''s Park', 10104), (2, 'Ayr United', 'Somerset Park', 11998);
INSERT INTO singer VALUES (1, 'Joe Sharp', 'Netherlands', 52), (2, 'Timbaland', 'United States', 32), (3, 'Justin Brown', 'France', 29);
INSERT INTO concert VALUES (1, 'Auditions', 'Free choice', '1', '2014'), (2, 'Super bootcamp', 'Free choice 2', '2', '2014');
INSERT INTO singer_in_concert VALUES (1, '2'), (1, '3'), (2, '1');
";

pub const CONCERT_NAMES: &[(&str, &str)] = &[("singer_in_concert", "singer in concert")];

pub fn concert_fixture() -> Fixture {
    build(&[DbSpec { db_id: "concert_singer", script: CONCERT_SCRIPT, natural_names: CONCERT_NAMES }])
}
