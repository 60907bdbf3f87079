use super::ast::Loc;
use super::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    Int(i64),
    Float(f64),
    Str(String),
    Import,
    For,
    In,
    If,
    Else,
    True,
    False,
    None,
    Assign,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    StarStar,
    Slash,
    Percent,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Dot,
    Colon,
    Newline,
    Indent,
    Dedent,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Name(n) => format!("name '{n}'"),
            Tok::Int(i) => format!("integer {i}"),
            Tok::Float(x) => format!("float {x}"),
            Tok::Str(_) => "string literal".into(),
            Tok::Newline => "end of line".into(),
            Tok::Indent => "indent".into(),
            Tok::Dedent => "dedent".into(),
            Tok::Eof => "end of input".into(),
            other => format!("'{}'", symbol(other)),
        }
    }
}

fn symbol(t: &Tok) -> &'static str {
    match t {
        Tok::Import => "import",
        Tok::For => "for",
        Tok::In => "in",
        Tok::If => "if",
        Tok::Else => "else",
        Tok::True => "True",
        Tok::False => "False",
        Tok::None => "None",
        Tok::Assign => "=",
        Tok::Eq => "==",
        Tok::Ne => "!=",
        Tok::Lt => "<",
        Tok::Le => "<=",
        Tok::Gt => ">",
        Tok::Ge => ">=",
        Tok::Plus => "+",
        Tok::Minus => "-",
        Tok::Star => "*",
        Tok::StarStar => "**",
        Tok::Slash => "/",
        Tok::Percent => "%",
        Tok::LParen => "(",
        Tok::RParen => ")",
        Tok::LBracket => "[",
        Tok::RBracket => "]",
        Tok::Comma => ",",
        Tok::Dot => ".",
        Tok::Colon => ":",
        _ => "?",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub loc: Loc,
}

pub const KEYWORDS: [&str; 8] = ["import", "for", "in", "if", "else", "True", "False", "None"];

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "import" => Tok::Import,
        "for" => Tok::For,
        "in" => Tok::In,
        "if" => Tok::If,
        "else" => Tok::Else,
        "True" => Tok::True,
        "False" => Tok::False,
        "None" => Tok::None,
        _ => return None,
    })
}

/// Tokenize, emitting INDENT/DEDENT from leading spaces. Errors are
/// collected; lexing continues past them so the parser can report more.
pub fn lex(source: &str) -> (Vec<Token>, Vec<SyntaxError>) {
    let mut tokens = Vec::new();
    let mut errors = Vec::new();
    let mut indents: Vec<u32> = vec![0];
    let mut depth = 0usize;

    for (idx, raw_line) in source.lines().enumerate() {
        let line_no = idx as u32 + 1;
        let chars: Vec<char> = raw_line.chars().collect();
        let mut i = 0usize;

        if depth == 0 {
            let mut width = 0u32;
            while i < chars.len() && (chars[i] == ' ' || chars[i] == '\t') {
                if chars[i] == '\t' {
                    errors.push(SyntaxError::new(line_no, i as u32 + 1, "tab in indentation"));
                }
                width += 1;
                i += 1;
            }
            if i >= chars.len() || chars[i] == '#' {
                continue;
            }
            let loc = Loc::new(line_no, i as u32 + 1);
            let current = *indents.last().unwrap();
            if width > current {
                indents.push(width);
                tokens.push(Token { tok: Tok::Indent, loc });
            } else if width < current {
                while *indents.last().unwrap() > width {
                    indents.pop();
                    tokens.push(Token { tok: Tok::Dedent, loc });
                }
                if *indents.last().unwrap() != width {
                    errors.push(SyntaxError::new(line_no, 1, "unindent does not match any outer level"));
                    indents.push(width);
                }
            }
        }

        let mut emitted = false;
        while i < chars.len() {
            let c = chars[i];
            let col = i as u32 + 1;
            let loc = Loc::new(line_no, col);
            if c == ' ' || c == '\t' || c == '\r' {
                i += 1;
                continue;
            }
            if c == '#' {
                break;
            }
            emitted = true;
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let tok = keyword(&word).unwrap_or(Tok::Name(word));
                tokens.push(Token { tok, loc });
                continue;
            }
            if c.is_ascii_digit() {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let mut is_float = false;
                if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                    is_float = true;
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        is_float = true;
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                if is_float {
                    match text.parse::<f64>() {
                        Ok(x) if x.is_finite() => tokens.push(Token { tok: Tok::Float(x), loc }),
                        _ => errors.push(SyntaxError::new(line_no, col, format!("invalid float literal '{text}'"))),
                    }
                } else {
                    match text.parse::<i64>() {
                        Ok(n) => tokens.push(Token { tok: Tok::Int(n), loc }),
                        Err(_) => errors.push(SyntaxError::new(
                            line_no,
                            col,
                            format!("integer literal '{text}' out of range"),
                        )),
                    }
                }
                continue;
            }
            if c == '"' || c == '\'' {
                let quote = c;
                i += 1;
                let mut value = String::new();
                let mut closed = false;
                while i < chars.len() {
                    let ch = chars[i];
                    if ch == quote {
                        closed = true;
                        i += 1;
                        break;
                    }
                    if ch == '\\' && i + 1 < chars.len() {
                        let esc = chars[i + 1];
                        match esc {
                            'n' => value.push('\n'),
                            't' => value.push('\t'),
                            '\\' => value.push('\\'),
                            '"' => value.push('"'),
                            '\'' => value.push('\''),
                            other => {
                                errors.push(SyntaxError::new(
                                    line_no,
                                    i as u32 + 1,
                                    format!("unknown escape '\\{other}'"),
                                ));
                            }
                        }
                        i += 2;
                        continue;
                    }
                    value.push(ch);
                    i += 1;
                }
                if closed {
                    tokens.push(Token { tok: Tok::Str(value), loc });
                } else {
                    errors.push(SyntaxError::new(line_no, col, "unterminated string literal"));
                }
                continue;
            }
            let next = chars.get(i + 1).copied();
            let (tok, len) = match (c, next) {
                ('=', Some('=')) => (Tok::Eq, 2),
                ('!', Some('=')) => (Tok::Ne, 2),
                ('<', Some('=')) => (Tok::Le, 2),
                ('>', Some('=')) => (Tok::Ge, 2),
                ('*', Some('*')) => (Tok::StarStar, 2),
                ('=', _) => (Tok::Assign, 1),
                ('<', _) => (Tok::Lt, 1),
                ('>', _) => (Tok::Gt, 1),
                ('+', _) => (Tok::Plus, 1),
                ('-', _) => (Tok::Minus, 1),
                ('*', _) => (Tok::Star, 1),
                ('/', _) => (Tok::Slash, 1),
                ('%', _) => (Tok::Percent, 1),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                ('[', _) => (Tok::LBracket, 1),
                (']', _) => (Tok::RBracket, 1),
                (',', _) => (Tok::Comma, 1),
                ('.', _) => (Tok::Dot, 1),
                (':', _) => (Tok::Colon, 1),
                _ => {
                    errors.push(SyntaxError::new(line_no, col, format!("unexpected character '{c}'")));
                    i += 1;
                    continue;
                }
            };
            match tok {
                Tok::LParen | Tok::LBracket => depth += 1,
                Tok::RParen | Tok::RBracket => depth = depth.saturating_sub(1),
                _ => {}
            }
            tokens.push(Token { tok, loc });
            i += len;
        }

        if emitted && depth == 0 {
            tokens.push(Token { tok: Tok::Newline, loc: Loc::new(line_no, chars.len() as u32 + 1) });
        }
    }

    let end_line = source.lines().count() as u32 + 1;
    let end = Loc::new(end_line, 1);
    if depth > 0 {
        errors.push(SyntaxError::new(end_line, 1, "unclosed bracket at end of input"));
        tokens.push(Token { tok: Tok::Newline, loc: end });
    }
    while indents.len() > 1 {
        indents.pop();
        tokens.push(Token { tok: Tok::Dedent, loc: end });
    }
    tokens.push(Token { tok: Tok::Eof, loc: end });
    (tokens, errors)
}
