use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// `%.12g`-style formatting.
pub fn g12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    let sci = format!("{x:.11e}");
    // rounding can bump the exponent, so read it back
    let exp = sci.split('e').nth(1).and_then(|e| e.parse::<i32>().ok()).unwrap_or(exp);
    if (-4..12).contains(&exp) {
        let s = format!("{x:.*}", (11 - exp).max(0) as usize);
        trim(&s).to_string()
    } else {
        let (m, e) = sci.split_once('e').expect("scientific");
        format!("{}e{e}", trim(m))
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn open(out: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// CSV writer that starts with a `# censorlab <name> v1` schema line.
pub struct Table {
    inner: csv::Writer<Box<dyn Write>>,
}

impl Table {
    pub fn new(out: Option<&Path>, schema: &str, header: &[&str]) -> io::Result<Self> {
        let mut w = open(out)?;
        writeln!(w, "# censorlab {schema} v1")?;
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(header)?;
        Ok(Table { inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> io::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields).map_err(io::Error::from)
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.inner.flush()
    }
}
