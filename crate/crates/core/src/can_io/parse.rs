use super::{CanFrame, CanIoError, FrameKind, FrameLabel, MAX_CAN_ID};

pub const NORMALIZED_HEADER: &str = "timestamp,id_hex,dlc,kind,label,payload_hex";

fn parse_timestamp(s: &str) -> Result<f64, CanIoError> {
    let t: f64 = s
        .parse()
        .map_err(|_| CanIoError::malformed(format!("bad timestamp {s:?}")))?;
    if !t.is_finite() || t < 0.0 {
        return Err(CanIoError::malformed(format!("bad timestamp {s:?}")));
    }
    Ok(t)
}

fn parse_id(s: &str) -> Result<u32, CanIoError> {
    let id = u32::from_str_radix(s, 16)
        .map_err(|_| CanIoError::malformed(format!("non-hex id {s:?}")))?;
    if id > MAX_CAN_ID {
        return Err(CanIoError::malformed(format!("id {s} exceeds 29 bits")));
    }
    Ok(id)
}

fn parse_dlc(s: &str) -> Result<u8, CanIoError> {
    match s.parse::<u8>() {
        Ok(n) if n <= 8 => Ok(n),
        _ => Err(CanIoError::malformed(format!("bad dlc {s:?}"))),
    }
}

fn parse_byte(s: &str) -> Result<u8, CanIoError> {
    if s.len() > 2 {
        return Err(CanIoError::malformed(format!("bad byte {s:?}")));
    }
    u8::from_str_radix(s, 16).map_err(|_| CanIoError::malformed(format!("bad byte {s:?}")))
}

/// Shortest text that parses back to exactly `t`, preferring the six-decimal
/// layout of the benchmark files.
fn format_timestamp(t: f64) -> String {
    let fixed = format!("{t:.6}");
    if fixed.parse::<f64>() == Ok(t) {
        fixed
    } else {
        format!("{t}")
    }
}

fn expect_token<'a>(
    tokens: &mut impl Iterator<Item = &'a str>,
    want: &str,
) -> Result<(), CanIoError> {
    match tokens.next() {
        Some(tok) if tok == want => Ok(()),
        other => Err(CanIoError::malformed(format!(
            "expected {want:?}, found {other:?}"
        ))),
    }
}

fn next_token<'a>(
    tokens: &mut impl Iterator<Item = &'a str>,
    what: &str,
) -> Result<&'a str, CanIoError> {
    tokens
        .next()
        .ok_or_else(|| CanIoError::malformed(format!("missing {what}")))
}

/// Parses one OTIDS record. The 3-bit flag after the id is `100` for a
/// remote frame and `000` for a data frame.
pub fn parse_otids_line(line: &str) -> Result<CanFrame, CanIoError> {
    let mut tokens = line.split_whitespace();
    expect_token(&mut tokens, "Timestamp:")?;
    let timestamp = parse_timestamp(next_token(&mut tokens, "timestamp")?)?;
    expect_token(&mut tokens, "ID:")?;
    let id_text = next_token(&mut tokens, "id")?;
    let can_id = parse_id(id_text)?;
    let kind = match next_token(&mut tokens, "remote flag")? {
        "000" => FrameKind::Data,
        "100" => FrameKind::Remote,
        other => return Err(CanIoError::malformed(format!("bad remote flag {other:?}"))),
    };
    expect_token(&mut tokens, "DLC:")?;
    let dlc = parse_dlc(next_token(&mut tokens, "dlc")?)?;
    let payload = tokens.map(parse_byte).collect::<Result<Vec<u8>, _>>()?;
    let expected = match kind {
        FrameKind::Data => dlc as usize,
        FrameKind::Remote => 0,
    };
    if payload.len() != expected {
        return Err(CanIoError::malformed(format!(
            "{} payload bytes, expected {expected}",
            payload.len()
        )));
    }
    Ok(CanFrame {
        timestamp,
        can_id,
        id_text: id_text.to_string(),
        dlc,
        payload,
        kind,
        label: FrameLabel::Unknown,
    })
}

pub fn format_otids_line(frame: &CanFrame) -> String {
    let flag = match frame.kind {
        FrameKind::Data => "000",
        FrameKind::Remote => "100",
    };
    let mut s = format!(
        "Timestamp: {} ID: {} {flag} DLC: {}",
        format_timestamp(frame.timestamp),
        frame.id_text,
        frame.dlc
    );
    for b in &frame.payload {
        s.push_str(&format!(" {b:02x}"));
    }
    s
}

/// Parses one Car Hacking CSV row (`timestamp,id,dlc,bytes..,flag`).
/// Rows are always data frames; the flag becomes the label.
pub fn parse_carhacking_row(row: &str) -> Result<CanFrame, CanIoError> {
    let fields: Vec<&str> = row.split(',').map(str::trim).collect();
    if fields.len() < 4 {
        return Err(CanIoError::malformed(format!(
            "{} fields, need at least 4",
            fields.len()
        )));
    }
    let timestamp = parse_timestamp(fields[0])?;
    let can_id = parse_id(fields[1])?;
    let dlc = parse_dlc(fields[2])?;
    if fields.len() != dlc as usize + 4 {
        return Err(CanIoError::malformed(format!(
            "dlc {dlc} needs {} fields, found {}",
            dlc as usize + 4,
            fields.len()
        )));
    }
    let payload = fields[3..3 + dlc as usize]
        .iter()
        .map(|b| parse_byte(b))
        .collect::<Result<Vec<u8>, _>>()?;
    let label = match fields[3 + dlc as usize] {
        "R" => FrameLabel::Normal,
        "T" => FrameLabel::Injected,
        other => return Err(CanIoError::malformed(format!("bad flag {other:?}"))),
    };
    Ok(CanFrame {
        timestamp,
        can_id,
        id_text: fields[1].to_string(),
        dlc,
        payload,
        kind: FrameKind::Data,
        label,
    })
}

/// Inverse of [`parse_carhacking_row`] for data frames labelled Normal or Injected.
pub fn format_carhacking_row(frame: &CanFrame) -> String {
    let mut s = format!(
        "{},{},{}",
        format_timestamp(frame.timestamp),
        frame.id_text,
        frame.dlc
    );
    for b in &frame.payload {
        s.push_str(&format!(",{b:02x}"));
    }
    let flag = if frame.label == FrameLabel::Injected {
        "T"
    } else {
        "R"
    };
    s.push(',');
    s.push_str(flag);
    s
}

fn kind_str(kind: FrameKind) -> &'static str {
    match kind {
        FrameKind::Data => "Data",
        FrameKind::Remote => "Remote",
    }
}

fn label_str(label: FrameLabel) -> &'static str {
    match label {
        FrameLabel::Normal => "Normal",
        FrameLabel::Injected => "Injected",
        FrameLabel::Unknown => "Unknown",
    }
}

pub fn format_normalized_row(frame: &CanFrame) -> String {
    format!(
        "{},{},{},{},{},{}",
        format_timestamp(frame.timestamp),
        frame.id_text,
        frame.dlc,
        kind_str(frame.kind),
        label_str(frame.label),
        hex::encode(&frame.payload)
    )
}

pub fn parse_normalized_row(row: &str) -> Result<CanFrame, CanIoError> {
    let fields: Vec<&str> = row.split(',').map(str::trim).collect();
    if fields.len() != 6 {
        return Err(CanIoError::malformed(format!(
            "{} fields, expected 6",
            fields.len()
        )));
    }
    let timestamp = parse_timestamp(fields[0])?;
    let can_id = parse_id(fields[1])?;
    let dlc = parse_dlc(fields[2])?;
    let kind = match fields[3] {
        "Data" => FrameKind::Data,
        "Remote" => FrameKind::Remote,
        other => return Err(CanIoError::malformed(format!("bad kind {other:?}"))),
    };
    let label = match fields[4] {
        "Normal" => FrameLabel::Normal,
        "Injected" => FrameLabel::Injected,
        "Unknown" => FrameLabel::Unknown,
        other => return Err(CanIoError::malformed(format!("bad label {other:?}"))),
    };
    let payload = hex::decode(fields[5])
        .map_err(|e| CanIoError::malformed(format!("bad payload hex: {e}")))?;
    let frame = CanFrame {
        timestamp,
        can_id,
        id_text: fields[1].to_string(),
        dlc,
        payload,
        kind,
        label,
    };
    frame.validate().map_err(CanIoError::malformed)?;
    Ok(frame)
}
