use serde_json::{Map, Value};

/// Parses `key=value`; the value is read as JSON when it parses, else as a string.
pub fn parse_assignment(s: &str) -> Result<(String, Value), String> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| format!("override `{s}` is not of the form key=value"))?;
    if key.is_empty() {
        return Err(format!("override `{s}` has an empty key"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Sets `value` at a dotted path, creating objects along the way.
/// Numeric segments index into existing arrays.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), String> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| format!("`{path}`: `{part}` is not an array index"))?;
                let len = items.len();
                items
                    .get_mut(idx)
                    .ok_or_else(|| format!("`{path}`: index {idx} out of range ({len})"))?
            }
            Value::Object(map) => map.entry(part.to_string()).or_insert_with(|| {
                if last {
                    Value::Null
                } else {
                    Value::Object(Map::new())
                }
            }),
            other => {
                if !other.is_null() {
                    return Err(format!("`{path}`: cannot descend into `{part}`"));
                }
                *other = Value::Object(Map::new());
                other
                    .as_object_mut()
                    .unwrap()
                    .entry(part.to_string())
                    .or_insert(Value::Null)
            }
        };
    }
    *node = value;
    Ok(())
}
