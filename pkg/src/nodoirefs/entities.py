"""Named character entities declared by the DBLP DTD (ISO Latin-1 range)."""

DBLP_ENTITIES: dict[str, int] = {
    "nbsp": 0xA0,  # '\xa0'
    "iexcl": 0xA1,  # ¡
    "cent": 0xA2,  # ¢
    "pound": 0xA3,  # £
    "curren": 0xA4,  # ¤
    "yen": 0xA5,  # ¥
    "brvbar": 0xA6,  # ¦
    "sect": 0xA7,  # §
    "uml": 0xA8,  # ¨
    "copy": 0xA9,  # ©
    "ordf": 0xAA,  # ª
    "laquo": 0xAB,  # «
    "not": 0xAC,  # ¬
    "shy": 0xAD,  # '\xad'
    "reg": 0xAE,  # ®
    "macr": 0xAF,  # ¯
    "deg": 0xB0,  # °
    "plusmn": 0xB1,  # ±
    "sup2": 0xB2,  # ²
    "sup3": 0xB3,  # ³
    "acute": 0xB4,  # ´
    "micro": 0xB5,  # µ
    "para": 0xB6,  # ¶
    "middot": 0xB7,  # ·
    "cedil": 0xB8,  # ¸
    "sup1": 0xB9,  # ¹
    "ordm": 0xBA,  # º
    "raquo": 0xBB,  # »
    "frac14": 0xBC,  # ¼
    "frac12": 0xBD,  # ½
    "frac34": 0xBE,  # ¾
    "iquest": 0xBF,  # ¿
    "Agrave": 0xC0,  # À
    "Aacute": 0xC1,  # Á
    "Acirc": 0xC2,  # Â
    "Atilde": 0xC3,  # Ã
    "Auml": 0xC4,  # Ä
    "Aring": 0xC5,  # Å
    "AElig": 0xC6,  # Æ
    "Ccedil": 0xC7,  # Ç
    "Egrave": 0xC8,  # È
    "Eacute": 0xC9,  # É
    "Ecirc": 0xCA,  # Ê
    "Euml": 0xCB,  # Ë
    "Igrave": 0xCC,  # Ì
    "Iacute": 0xCD,  # Í
    "Icirc": 0xCE,  # Î
    "Iuml": 0xCF,  # Ï
    "ETH": 0xD0,  # Ð
    "Ntilde": 0xD1,  # Ñ
    "Ograve": 0xD2,  # Ò
    "Oacute": 0xD3,  # Ó
    "Ocirc": 0xD4,  # Ô
    "Otilde": 0xD5,  # Õ
    "Ouml": 0xD6,  # Ö
    "times": 0xD7,  # ×
    "Oslash": 0xD8,  # Ø
    "Ugrave": 0xD9,  # Ù
    "Uacute": 0xDA,  # Ú
    "Ucirc": 0xDB,  # Û
    "Uuml": 0xDC,  # Ü
    "Yacute": 0xDD,  # Ý
    "THORN": 0xDE,  # Þ
    "szlig": 0xDF,  # ß
    "agrave": 0xE0,  # à
    "aacute": 0xE1,  # á
    "acirc": 0xE2,  # â
    "atilde": 0xE3,  # ã
    "auml": 0xE4,  # ä
    "aring": 0xE5,  # å
    "aelig": 0xE6,  # æ
    "ccedil": 0xE7,  # ç
    "egrave": 0xE8,  # è
    "eacute": 0xE9,  # é
    "ecirc": 0xEA,  # ê
    "euml": 0xEB,  # ë
    "igrave": 0xEC,  # ì
    "iacute": 0xED,  # í
    "icirc": 0xEE,  # î
    "iuml": 0xEF,  # ï
    "eth": 0xF0,  # ð
    "ntilde": 0xF1,  # ñ
    "ograve": 0xF2,  # ò
    "oacute": 0xF3,  # ó
    "ocirc": 0xF4,  # ô
    "otilde": 0xF5,  # õ
    "ouml": 0xF6,  # ö
    "divide": 0xF7,  # ÷
    "oslash": 0xF8,  # ø
    "ugrave": 0xF9,  # ù
    "uacute": 0xFA,  # ú
    "ucirc": 0xFB,  # û
    "uuml": 0xFC,  # ü
    "yacute": 0xFD,  # ý
    "thorn": 0xFE,  # þ
    "yuml": 0xFF,  # ÿ
}


def entity_declarations() -> str:
    """Internal-subset text declaring every entity as a character reference."""
    return "".join(f'<!ENTITY {name} "&#{cp};">' for name, cp in DBLP_ENTITIES.items())
