/// Removes markup tags and decodes common character references.
///
/// A tag is `<` followed by an ASCII letter, `/`, `!` or `?`, running to
/// the next `>`. Any other `<`, or one with no closing `>`, is kept as a
/// literal. Named references `&amp; &lt; &gt; &quot; &apos;` and numeric
/// references (`&#38;`, `&#x26;`) are decoded in a single pass, so decoded
/// text is never re-interpreted.
pub fn strip_html(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < text.len() {
        let c = bytes[i];
        if c == b'<' {
            if let Some(&next) = bytes.get(i + 1) {
                if next.is_ascii_alphabetic() || matches!(next, b'/' | b'!' | b'?') {
                    if let Some(end) = text[i + 1..].find('>') {
                        i += end + 2;
                        continue;
                    }
                }
            }
        } else if c == b'&' {
            if let Some((decoded, len)) = decode_entity(&text[i..]) {
                out.push(decoded);
                i += len;
                continue;
            }
        }
        let ch = text[i..].chars().next().unwrap();
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}

/// Decodes a reference at the start of `s`, returning the character and
/// the number of bytes consumed.
fn decode_entity(s: &str) -> Option<(char, usize)> {
    let semi = s.bytes().take(12).position(|b| b == b';')?;
    let body = &s[1..semi];
    let ch = match body {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        _ => {
            let num = body.strip_prefix('#')?;
            let code = match num.strip_prefix(['x', 'X']) {
                Some(hex) if !hex.is_empty() && hex.bytes().all(|b| b.is_ascii_hexdigit()) => {
                    u32::from_str_radix(hex, 16).ok()?
                }
                Some(_) => return None,
                None if !num.is_empty() && num.bytes().all(|b| b.is_ascii_digit()) => num.parse().ok()?,
                None => return None,
            };
            char::from_u32(code)?
        }
    };
    Some((ch, semi + 1))
}
