#!/usr/bin/env python3
"""Regenerates the bundled fixture: annotations, feature files, translation
table, word lists and a small biography dump. Output is deterministic."""

import json
import random
import struct
from pathlib import Path

HERE = Path(__file__).resolve().parent
D = 16
LANGS = ["en", "es", "ru"]
DIMS = ["Power", "Agency", "SentSubj", "SentObj"]
ENCODER = "fixture-encoder"

VERBS = {
    "en": ["lead", "found", "win", "direct", "praise", "attack", "support", "lose",
           "defend", "sign", "build", "reject", "help", "criticize", "host", "join"],
    "es": ["dirigir", "fundar", "ganar", "encabezar", "elogiar", "atacar", "apoyar", "perder",
           "defender", "firmar", "construir", "rechazar", "ayudar", "criticar", "presentar", "unir"],
    "ru": ["вести", "основать", "выиграть", "руководить", "хвалить", "атаковать", "поддержать", "проиграть",
           "защищать", "подписать", "построить", "отвергнуть", "помочь", "критиковать", "принять", "вступить"],
}
# latent verb-level labels per dimension, shared by the translations of a verb
VERB_LATENT = [
    (1, 1, 1, 0), (1, 1, 1, 1), (1, 1, 1, -1), (1, 1, 0, 0),
    (0, 0, 1, 1), (1, 1, -1, -1), (0, 1, 1, 1), (-1, -1, -1, 0),
    (0, 1, 1, -1), (0, 0, 0, 0), (0, 1, 1, 0), (-1, 0, -1, -1),
    (-1, 0, 1, 1), (1, 1, -1, -1), (0, 0, 1, 1), (-1, -1, 0, 1),
]
WORDING = {
    "Power": {1: "more power", 0: "equal power", -1: "less power"},
    "Agency": {1: "high", 0: "moderate", -1: "low"},
    "SentSubj": {1: "positive", 0: "neutral", -1: "negative"},
    "SentObj": {1: "positive", 0: "neutral", -1: "negative"},
}
FRAMES = {
    "en": [("The", "director"), ("The", "mayor"), ("The", "teacher"), ("The", "singer")],
    "es": [("El", "director"), ("El", "alcalde"), ("La", "maestra"), ("La", "cantante")],
    "ru": [("", "директор"), ("", "мэр"), ("", "учитель"), ("", "певица")],
}
OBJECTS = {
    "en": ["plan", "team", "prize", "company", "law", "critic"],
    "es": ["plan", "equipo", "premio", "empresa", "ley", "crítico"],
    "ru": ["план", "команду", "премию", "компанию", "закон", "критика"],
}
PERSON_NOUNS = {
    "en": ["director", "mayor", "teacher", "singer", "critic", "actor", "writer"],
    "es": ["director", "alcalde", "maestra", "cantante", "crítico", "actor", "escritora"],
    "ru": ["директор", "мэр", "учитель", "певица", "критика", "критик", "актёр"],
}
PRONOUNS = {"en": ("He", "She"), "es": ("Él", "Ella"), "ru": ("Он", "Она")}
TRANSLIT = dict(zip("abcdefghijklmnopqrstuvwxyz",
                    ["а", "б", "к", "д", "е", "ф", "г", "х", "и", "ж", "к", "л", "м",
                     "н", "о", "п", "к", "р", "с", "т", "у", "в", "в", "кс", "й", "з"]))


def clip(x):
    return max(-1, min(1, x))


def vector(rng, latent, noise, shift=(0.0, 0.0, 0.0, 0.0)):
    v = [rng.gauss(0.0, noise) for _ in range(D)]
    for i, lab in enumerate(latent):
        v[i] += 1.5 * lab + shift[i]
        v[4 + i] += 0.75 * lab
    return v


def write_features(path, lang, records, extra=(("pooling", "mean"), ("source", "make_fixture.py"))):
    path.parent.mkdir(parents=True, exist_ok=True)
    head = f"CAAFEAT 1\ndim={D}\ncount={len(records)}\nlanguage={lang}\nencoder={ENCODER}\nlayer=last\n"
    for k, v in extra:
        head += f"{k}={v}\n"
    head += "end\n"
    with open(path, "wb") as f:
        f.write(head.encode())
        for key, vec in records:
            kb = key.encode()
            f.write(struct.pack("<I", len(kb)))
            f.write(kb)
            f.write(struct.pack(f"<{D}f", *vec))


def annotations(rng):
    annotators = [f"w{i:02d}" for i in range(1, 13)]
    rows = []
    instances = {}
    for lang in LANGS:
        for vi, verb in enumerate(VERBS[lang]):
            for ci, (det, subj) in enumerate(FRAMES[lang]):
                obj = OBJECTS[lang][(vi + ci) % len(OBJECTS[lang])]
                words = ([det] if det else []) + [subj, verb, obj, "."]
                sentence = " ".join(words)
                tok = words.index(verb)
                iid = f"{lang}-{vi:02d}-{ci}"
                # one context in four shifts a dimension to model context loss
                latent = list(VERB_LATENT[vi])
                if ci == 3:
                    d = (vi + LANGS.index(lang)) % 4
                    latent[d] = clip(latent[d] + (1 if latent[d] <= 0 else -1))
                instances[iid] = (lang, verb, latent)
                team = rng.sample(annotators, 3)
                if (vi + ci) % 3 == 0:
                    team[2] = "w13"  # the unreliable annotator
                for di, dim in enumerate(DIMS):
                    for a in team:
                        if a == "w13":
                            value = rng.choice([x for x in (-1, 0, 1) if x != latent[di]])
                        elif rng.random() < 0.15:
                            value = rng.choice((-1, 0, 1))
                        else:
                            value = latent[di]
                        rows.append([iid, lang, dim, verb, sentence, str(tok), a, WORDING[dim][value]])
    with open(HERE / "annotations.tsv", "w", encoding="utf-8") as f:
        f.write("\t".join(["instance_id", "language", "dimension", "verb_lemma", "sentence",
                           "verb_token_index", "annotator_id", "judgement"]) + "\n")
        for r in rows:
            f.write("\t".join(r) + "\n")
    return instances


def feature_files(rng, instances):
    for lang in LANGS:
        recs = [(iid, vector(rng, lat, 0.6)) for iid, (l, _, lat) in sorted(instances.items()) if l == lang]
        write_features(HERE / "features" / f"{lang}.caafeat", lang, recs)
    for lang in LANGS[1:]:
        recs = [(iid, vector(rng, lat, 1.4)) for iid, (l, _, lat) in sorted(instances.items()) if l == lang]
        write_features(HERE / "features" / f"{lang}.mt-en.caafeat", lang, recs,
                       extra=(("pooling", "mean"), ("translated_to", "en")))


def translation_table():
    with open(HERE / "translations.tsv", "w", encoding="utf-8") as f:
        f.write("source_lemma\tsource_language\ttarget_lemma\taccepted_flag\n")
        for lang in LANGS[1:]:
            for vi, verb in enumerate(VERBS[lang]):
                accepted = "false" if vi == 9 else "true"
                f.write(f"{verb}\t{lang}\t{VERBS['en'][vi]}\t{accepted}\n")


PEOPLE = [
    # id, first, last, group, pronoun, nationality, birth_year, occupation, categories
    ("Alex_Rowe", "Alex", "Rowe", "treatment", 0, "American", 1948, "Entertainer",
     ["American_actors", "Film_directors", "LGBT_actors"]),
    ("Bea_Lund", "Bea", "Lund", "treatment", 1, "British", 1971, "Artist",
     ["British_painters", "Royal_Academicians", "Women_artists", "LGBT_artists"]),
    ("Cole_Park", "Cole", "Park", "treatment", 0, "American", 1962, "Politician",
     ["American_politicians", "Mayors", "Harvard_alumni", "LGBT_politicians"]),
    ("Dana_Vega", "Dana", "Vega", "treatment", 1, "Mexican", 1889, "Artist",
     ["Mexican_painters", "Muralists", "LGBT_artists"]),
    ("Eli_Stone", "Eli", "Stone", "treatment", 0, "American", 1975, "Entertainer",
     ["American_singers", "Grammy_winners", "Songwriters", "LGBT_singers"]),
    ("Fay_Moss", "Fay", "Moss", "treatment", 1, "Russian", 1935, "Scientist",
     ["Russian_physicists", "Women_scientists", "LGBT_scientists"]),
    ("Gus_Hale", "Gus", "Hale", "treatment", 0, "British", 1958, "Entertainer",
     ["British_actors", "Stage_actors", "Film_directors", "LGBT_actors"]),
    ("Hana_Cruz", "Hana", "Cruz", "treatment", 1, "American", 1982, "Politician",
     ["American_politicians", "Harvard_alumni", "Women_politicians", "LGBT_politicians"]),
    ("Ian_Frost", "Ian", "Frost", "candidate", 0, "American", 1950, "Entertainer",
     ["American_actors", "Film_directors"]),
    ("Jo_Marsh", "Jo", "Marsh", "candidate", 1, "British", 1969, "Artist",
     ["British_painters", "Royal_Academicians"]),
    ("Kip_Lane", "Kip", "Lane", "candidate", 0, "American", 1960, "Politician",
     ["American_politicians", "Mayors"]),
    ("Lia_Soto", "Lia", "Soto", "candidate", 1, "Mexican", 1895, "Artist",
     ["Mexican_painters", "Muralists", "Women_artists"]),
    ("Max_Ford", "Max", "Ford", "candidate", 0, "American", 1977, "Entertainer",
     ["American_singers", "Songwriters"]),
    ("Nia_Volk", "Nia", "Volk", "candidate", 1, "Russian", 1931, "Scientist",
     ["Russian_physicists", "Women_scientists", "Nobel_laureates"]),
    ("Oto_Reed", "Oto", "Reed", "candidate", 0, "British", 1955, "Entertainer",
     ["British_actors", "Stage_actors"]),
    ("Pia_Dunn", "Pia", "Dunn", "candidate", 1, "American", 1980, "Politician",
     ["American_politicians", "Women_politicians", "Harvard_alumni", "Governors"]),
    ("Quin_Bell", "Quin", "Bell", "candidate", 0, "American", 1966, "Athlete",
     ["American_athletes", "Olympic_medalists"]),
    ("Rae_Kent", "Rae", "Kent", "candidate", 1, "British", 1944, "Writer",
     ["British_novelists", "Booker_winners"]),
    ("Sam_Ortiz", "Sam", "Ortiz", "candidate", 0, "Mexican", 1990, "Entertainer",
     ["Mexican_actors"]),  # no Russian article
    ("Tess_Lowe", "Tess", "Lowe", "candidate", 1, "American", 1972, "Artist",
     ["American_painters"]),  # too few analyzable sentences
]


def translit(s):
    return "".join(TRANSLIT.get(c.lower(), c) if c.isalpha() else c for c in s).capitalize()


def conllu_sentence(sid, rows):
    out = [f"# sent_id = {sid}", "# text = " + " ".join(r[0] for r in rows)]
    for i, (form, lemma, upos, head, rel) in enumerate(rows, 1):
        out.append(f"{i}\t{form}\t{lemma}\t{upos}\t_\t_\t{head}\t{rel}\t_\t_")
    return "\n".join(out) + "\n"


def article(rng, person, lang, n_subject, shift, feature_recs):
    pid, first, last, _, pron, *_ = person
    if lang == "ru":
        first, last = translit(first), translit(last)
    verbs = VERBS[lang]
    objs = OBJECTS[lang]
    sents = []
    sid = 0
    for i in range(n_subject):
        sid += 1
        vi = rng.randrange(len(verbs))
        verb = verbs[vi]
        obj = objs[rng.randrange(len(objs))]
        kind = i % 3
        if kind == 0:  # full name
            rows = [(first, first, "PROPN", 3, "nsubj"), (last, last, "PROPN", 1, "flat"),
                    (verb, verb, "VERB", 0, "root"), (obj, obj, "NOUN", 3, "obj"), (".", ".", "PUNCT", 3, "punct")]
            vidx = 2
        elif kind == 1:  # surname
            rows = [(last, last, "PROPN", 2, "nsubj"), (verb, verb, "VERB", 0, "root"),
                    (obj, obj, "NOUN", 2, "obj"), (".", ".", "PUNCT", 2, "punct")]
            vidx = 1
        else:  # pronoun
            p = PRONOUNS[lang][pron]
            rows = [(p, p.lower(), "PRON", 2, "nsubj"), (verb, verb, "VERB", 0, "root"),
                    (obj, obj, "NOUN", 2, "obj"), (".", ".", "PUNCT", 2, "punct")]
            vidx = 1
        sents.append(conllu_sentence(f"s{sid}", rows))
        key = f"{pid}/{lang}/s{sid}#{vidx}"
        feature_recs.append((key, vector(rng, VERB_LATENT[vi], 0.8, shift)))
    # an object mention and a sentence without the person
    det, noun = FRAMES[lang][rng.randrange(4)]
    verb = verbs[4]
    sid += 1
    lead = [(det, det.lower(), "DET", 2, "det")] if det else []
    off = len(lead)
    rows = lead + [(noun, noun, "NOUN", off + 2, "nsubj"), (verb, verb, "VERB", 0, "root"),
                   (first, first, "PROPN", off + 2, "obj"), (last, last, "PROPN", off + 3, "flat"),
                   (".", ".", "PUNCT", off + 2, "punct")]
    sents.append(conllu_sentence(f"s{sid}", rows))
    sid += 1
    rows = lead + [(noun, noun, "NOUN", off + 2, "nsubj"), (verbs[5], verbs[5], "VERB", 0, "root"),
                   (objs[5], objs[5], "NOUN", off + 2, "obj"), (".", ".", "PUNCT", off + 2, "punct")]
    sents.append(conllu_sentence(f"s{sid}", rows))
    name = f"{first} {last}"
    return {"names": [name], "title": name,
            "url": f"https://{lang}.wikipedia.org/wiki/{name.replace(' ', '_')}",
            "conllu": "\n".join(sents)}


def corpus(rng):
    lines = []
    feats = {lang: [] for lang in LANGS}
    for person in PEOPLE:
        pid, first, last, group, pron, nat, year, occ, cats = person
        for lang in LANGS:
            if pid == "Sam_Ortiz" and lang == "ru":
                continue
            n = 1 if pid == "Tess_Lowe" else 18 + rng.randrange(7)
            # treatment articles portray lower power/agency in es and ru
            shift = (0.0, 0.0, 0.0, 0.0)
            if group == "treatment" and lang != "en":
                shift = (-0.9, -0.6, 0.0, 0.0)
            elif group == "treatment":
                shift = (0.0, -0.3, 0.3, 0.0)
            art = article(rng, person, lang, n, shift, feats[lang])
            rec = {"person_id": pid, "language": lang, "group": group, **art,
                   "categories": cats if lang == "en" else cats[:2],
                   "attributes": {"nationality": [nat], "birth_year": year, "occupation": [occ]}}
            lines.append(json.dumps(rec, ensure_ascii=False))
    with open(HERE / "corpus.jsonl", "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    for lang in LANGS:
        write_features(HERE / "corpus_features" / f"{lang}.caafeat", lang, sorted(feats[lang]))


def word_lists():
    (HERE / "person_nouns").mkdir(exist_ok=True)
    for lang in LANGS:
        with open(HERE / "person_nouns" / f"{lang}.txt", "w", encoding="utf-8") as f:
            f.write("# person nouns\n" + "\n".join(PERSON_NOUNS[lang]) + "\n")
    with open(HERE / "excluded_categories.txt", "w", encoding="utf-8") as f:
        f.write("# categories that mark the treatment group\n")
        f.write("\n".join(["LGBT_actors", "LGBT_artists", "LGBT_politicians", "LGBT_scientists",
                           "LGBT_singers"]) + "\n")


def main():
    rng = random.Random(20200705)
    instances = annotations(rng)
    feature_files(rng, instances)
    translation_table()
    corpus(rng)
    word_lists()


if __name__ == "__main__":
    main()
