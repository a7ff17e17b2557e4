use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    /// `$name` parameter binding.
    Binding(String),
    LParen,
    RParen,
    Comma,
    Colon,
    Arrow,
    FatArrow,
    Lt,
    Le,
    EqEq,
    Assign,
    Ne,
    Ge,
    Gt,
    Plus,
    Minus,
    Star,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Number(n) => write!(f, "`{n}`"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::Binding(s) => write!(f, "`${s}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::FatArrow => f.write_str("`=>`"),
            Tok::Lt => f.write_str("`<`"),
            Tok::Le => f.write_str("`<=`"),
            Tok::EqEq => f.write_str("`==`"),
            Tok::Assign => f.write_str("`=`"),
            Tok::Ne => f.write_str("`!=`"),
            Tok::Ge => f.write_str("`>=`"),
            Tok::Gt => f.write_str("`>`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
        }
    }
}

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

/// Tokenizes one source line. `#` starts a comment outside string literals.
pub fn lex_line(line: &str, line_no: usize) -> Result<Vec<Token>, (Pos, String)> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos {
            line: line_no,
            col: i + 1,
        };
        let two = |a: char, b: char| c == a && chars.get(i + 1) == Some(&b);
        let (tok, len) = if c.is_whitespace() {
            i += 1;
            continue;
        } else if c == '#' {
            break;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let end = scan(&chars, i, |c| c.is_ascii_alphanumeric() || c == '_');
            (Tok::Ident(chars[i..end].iter().collect()), end - i)
        } else if c == '$' {
            let end = scan(&chars, i + 1, |c| c.is_ascii_alphanumeric() || c == '_');
            if end == i + 1 {
                return Err((pos, "expected a name after `$`".into()));
            }
            (Tok::Binding(chars[i + 1..end].iter().collect()), end - i)
        } else if c.is_ascii_digit() {
            let mut end = scan(&chars, i, |c| c.is_ascii_digit());
            if chars.get(end) == Some(&'.') {
                end = scan(&chars, end + 1, |c| c.is_ascii_digit());
            }
            let text: String = chars[i..end].iter().collect();
            let n = text
                .parse::<f64>()
                .map_err(|_| (pos, format!("bad number {text:?}")))?;
            (Tok::Number(n), end - i)
        } else if c == '"' {
            let mut end = i + 1;
            let mut s = String::new();
            loop {
                match chars.get(end) {
                    None => return Err((pos, "unterminated string".into())),
                    Some('"') => break,
                    Some('\\') if chars.get(end + 1) == Some(&'"') => {
                        s.push('"');
                        end += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        end += 1;
                    }
                }
            }
            (Tok::Str(s), end + 1 - i)
        } else if two('-', '>') {
            (Tok::Arrow, 2)
        } else if two('=', '>') {
            (Tok::FatArrow, 2)
        } else if two('<', '=') {
            (Tok::Le, 2)
        } else if two('>', '=') {
            (Tok::Ge, 2)
        } else if two('=', '=') {
            (Tok::EqEq, 2)
        } else if two('!', '=') {
            (Tok::Ne, 2)
        } else {
            let tok = match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                ':' => Tok::Colon,
                '<' => Tok::Lt,
                '>' => Tok::Gt,
                '=' => Tok::Assign,
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                other => return Err((pos, format!("unexpected character {other:?}"))),
            };
            (tok, 1)
        };
        out.push(Token { tok, pos });
        i += len;
    }
    Ok(out)
}

fn scan(chars: &[char], start: usize, pred: impl Fn(char) -> bool) -> usize {
    let mut end = start;
    while end < chars.len() && pred(chars[end]) {
        end += 1;
    }
    end
}

/// Token cursor with one-token lookahead and positioned errors.
pub struct Cursor<'a> {
    tokens: &'a [Token],
    idx: usize,
    end: Pos,
}

impl<'a> Cursor<'a> {
    pub fn new(tokens: &'a [Token], end: Pos) -> Self {
        Self {
            tokens,
            idx: 0,
            end,
        }
    }

    pub fn peek(&self) -> Option<&'a Tok> {
        self.tokens.get(self.idx).map(|t| &t.tok)
    }

    pub fn pos(&self) -> Pos {
        self.tokens.get(self.idx).map(|t| t.pos).unwrap_or(self.end)
    }

    pub fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.idx);
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    pub fn at_end(&self) -> bool {
        self.idx >= self.tokens.len()
    }

    pub fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == kw) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, tok: &Tok) -> Result<(), (Pos, String)> {
        let pos = self.pos();
        match self.next() {
            Some(t) if &t.tok == tok => Ok(()),
            Some(t) => Err((pos, format!("expected {tok}, found {}", t.tok))),
            None => Err((pos, format!("expected {tok}, found end of input"))),
        }
    }

    pub fn ident(&mut self, what: &str) -> Result<(String, Pos), (Pos, String)> {
        let pos = self.pos();
        match self.next() {
            Some(Token {
                tok: Tok::Ident(s), ..
            }) => Ok((s.clone(), pos)),
            Some(t) => Err((pos, format!("expected {what}, found {}", t.tok))),
            None => Err((pos, format!("expected {what}, found end of input"))),
        }
    }

    pub fn expect_end(&self) -> Result<(), (Pos, String)> {
        match self.tokens.get(self.idx) {
            None => Ok(()),
            Some(t) => Err((t.pos, format!("unexpected {}", t.tok))),
        }
    }
}
