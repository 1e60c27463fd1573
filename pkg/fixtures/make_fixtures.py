#!/usr/bin/env python3
"""Regenerate the bundled fixture sessions.

Three deterministic sessions exercise the full engine surface:

  s01_teen        two speakers, an empty window, a boundary-straddling
                  segment, one near-duplicate insight rejection;
  s02_family      three speakers (guardian present), risk-dimension
                  evidence, multi-citation claims;
  s03_adversarial invalid extraction items (unknown dimension,
                  non-verbatim quote), a malformed analysis healed by
                  the retry fixture, a window with no fixtures at all
                  (skipped), and a profile citing a nonexistent entry.

The script ends with a verification pass that replays every session
through the real engine and asserts the expectations the fixtures were
built around (entry ids, skip counts, grounding).
"""

from __future__ import annotations

import json
import shutil
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).parent
DIM = 8

sys.path.insert(0, str(ROOT.parent / "src"))

from streamprofile.schema import load_config  # noqa: E402


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def directions(k, seed):
    rng = np.random.default_rng(seed)
    basis = np.linalg.qr(rng.normal(size=(DIM, k + 1)))[0].T
    return [unit(basis[i] + 0.8 * basis[k]) for i in range(k)]


def noisy(direction, rng, scale=0.05):
    return [round(float(x), 6) for x in unit(direction + rng.normal(scale=scale, size=DIM))]


def fenced(obj):
    return "```json\n" + json.dumps(obj, ensure_ascii=False, indent=2) + "\n```\n"


def analysis_text(prose, phases, filters, severity, emotion):
    block = {
        "phases": phases,
        "filtered_segments": [{"segment": i, "verdict": v} for i, v in filters],
        "severity": severity,
        "major_emotion": emotion,
    }
    return prose + "\n\n" + fenced(block)


def write_session(name, *, seed, speakers, segment_plan, parse_plan, extract_plan,
                  profile_lines, extra_mock=None, window_seconds=60.0):
    """segment_plan: list of (t_start, t_end, speaker_index, true_role, given_role, text, emotion)."""
    session_dir = ROOT / name
    if session_dir.exists():
        shutil.rmtree(session_dir)
    (session_dir / "mock").mkdir(parents=True)

    rng = np.random.default_rng(seed)
    dirs = directions(speakers, seed)
    role_to_dir = {}
    truth_roles = []
    with open(session_dir / "segments.jsonl", "w", encoding="utf-8") as fh:
        for t0, t1, spk, true_role, given_role, text, emotion in segment_plan:
            role_to_dir[true_role] = dirs[spk]
            truth_roles.append(true_role)
            line = {
                "utterance": text,
                "role": given_role,
                "t_start": t0,
                "t_end": t1,
                "embedding": noisy(dirs[spk], rng),
                "emotion": emotion,
            }
            fh.write(json.dumps(line, ensure_ascii=False) + "\n")

    enrollment = noisy(dirs[0], rng, scale=0.02)  # speaker 0 is always the counselor
    (session_dir / "enrollment.json").write_text(
        json.dumps(enrollment) + "\n", encoding="utf-8"
    )
    (session_dir / "truth.json").write_text(
        json.dumps({"roles": truth_roles, "speakers": speakers}, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )

    mock = session_dir / "mock"
    for window_index, text in parse_plan.items():
        (mock / f"parse_{window_index}.txt").write_text(text, encoding="utf-8")
    for window_index, items in extract_plan.items():
        body = "Evidence extraction for this window.\n" + fenced(items)
        (mock / f"extract_{window_index}.txt").write_text(body, encoding="utf-8")
    (mock / "profile_0.txt").write_text(
        "Synthesis over stored evidence.\n" + "\n".join(profile_lines) + "\n", encoding="utf-8"
    )
    for filename, content in (extra_mock or {}).items():
        (mock / filename).write_text(content, encoding="utf-8")

    config = {
        "window_seconds": window_seconds,
        "jaccard_threshold": 0.7,
        "speaker_counts": [2, 3],
        "history_max_chars": 8000,
        "llm_backend": "mock",
        "mock_dir": "mock",
        "llm": {"model": "scripted", "temperature": 0.3, "max_tokens": 8192, "seed": 42},
    }
    (session_dir / "config.json").write_text(
        json.dumps(config, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    return session_dir


# ------------------------------------------------------------------ s01

def build_s01():
    C, P = "counselor", "patient"
    plan = [
        # window 0
        (2.0, 6.5, 0, C, C, "最近过得怎么样,可以和我聊聊吗", None),
        (8.0, 14.0, 1, P, P, "我最近睡不好,晚上总是醒", "low"),
        (16.0, 21.0, 0, C, P, "你是说晚上经常醒来,很难再入睡,对吗", None),  # role flip
        (24.0, 32.0, 1, P, P, "嗯,而且我和爸爸吵架了,他总是只看成绩", None),
        # window 1
        (62.0, 66.0, 0, C, C, "在学校里和同学相处得怎么样", None),
        (68.0, 75.0, 1, P, P, "同学们都不怎么理我,我一个人吃饭", "low"),
        (78.0, 85.0, 1, P, C, "考试之前我会特别紧张,手心出汗", None),  # role flip
        (88.0, 93.0, 0, C, C, "听起来考试让你非常紧张", None),
        # window 2 left empty on purpose
        # window 3
        (182.0, 188.0, 1, P, P, "其实我睡不好已经半年了", None),
        (190.0, 196.0, 0, C, C, "这种情况持续半年了,确实需要重视", None),
        (198.0, 204.0, 1, P, P, "我觉得自己什么都做不好", "flat"),
        # window 4, last segment straddles the 300 s boundary
        (242.0, 247.0, 0, C, C, "今天我们先聊到这里,下周同一时间见", None),
        (250.0, 254.0, 1, P, P, "好的,谢谢老师", None),
        (299.0, 301.5, 1, P, P, "那我下周再来", None),
    ]
    parse = {
        0: analysis_text(
            "Sleep disruption and a father conflict surface early; the counselor's second "
            "line paraphrases the patient's disclosure.",
            ["ProblemManagement"],
            [(0, "discard"), (1, "retain-patient"), (2, "retain-paraphrase"), (3, "retain-patient")],
            "clinical", "depression",
        ),
        1: analysis_text(
            "Peer isolation and pre-exam anxiety with somatic signs.",
            ["ProblemManagement", "ObjectiveEvaluation"],
            [(1, "retain-patient"), (2, "retain-patient"), (3, "retain-paraphrase")],
            "clinical", "anxiety-disorder",
        ),
        3: analysis_text(
            "Half a year of poor sleep; self-worth collapse stated directly.",
            ["ProblemManagement"],
            [(0, "retain-patient"), (2, "retain-patient")],
            "clinical", "hopelessness",
        ),
        4: analysis_text(
            "Closing pleasantries only.",
            ["SupportiveGuidance"],
            [(0, "discard"), (1, "discard"), (2, "discard")],
            "normative", "calm",
        ),
    }
    extract = {
        0: [
            {"dimension": "A1", "utterance": "我最近睡不好,晚上总是醒", "insight": "夜间睡眠差,经常醒来", "emotion": None},
            {"dimension": "C1", "utterance": "我和爸爸吵架了,他总是只看成绩", "insight": "与父亲冲突,感到只被成绩评价", "emotion": None},
        ],
        1: [
            {"dimension": "C2", "utterance": "同学们都不怎么理我,我一个人吃饭", "insight": "同伴疏离,常独自吃饭", "emotion": None},
            {"dimension": "E5", "utterance": "考试之前我会特别紧张,手心出汗", "insight": "考前显著焦虑伴躯体症状", "emotion": None},
        ],
        3: [
            # near-duplicate of the window-0 A1 insight -> rejected
            {"dimension": "A1", "utterance": "其实我睡不好已经半年了", "insight": "夜间睡眠差,经常醒来了", "emotion": None},
            {"dimension": "D2", "utterance": "我觉得自己什么都做不好", "insight": "自我价值感显著偏低", "emotion": None},
        ],
        4: [],
    }
    profile = [
        "A1: 睡眠长期受损,夜间频繁醒来。 [ev-1]",
        "C1: 与父亲关系紧张,感到仅被学业成绩评价。 [ev-2]",
        "C2: 在校同伴关系疏离,常独自度过。 [ev-3]",
        "E5: 考试前出现明显的焦虑及躯体反应。 [ev-4]",
        "D2: 自我价值感明显偏低。 [ev-5]",
    ]
    return write_session("s01_teen", seed=101, speakers=2, segment_plan=plan,
                         parse_plan=parse, extract_plan=extract, profile_lines=profile)


# ------------------------------------------------------------------ s02

def build_s02():
    C, P, G = "counselor", "patient", "guardian"
    plan = [
        # window 0: guardian (mother) present, speaks briefly
        (1.0, 7.0, 0, C, C, "今天妈妈也一起来了,我们先聊聊最近的情况", None),
        (9.0, 13.0, 2, G, G, "她这两个星期几乎不出房间", None),
        (15.0, 24.0, 1, P, P, "在家里我不想说话,他们也不懂我", "flat"),
        (26.0, 33.0, 0, C, G, "你觉得家里人不理解你,所以宁愿一个人待着", None),  # flip
        # window 1: risk disclosure
        (61.0, 68.0, 0, C, C, "有没有过伤害自己的想法或者行为", None),
        (70.0, 81.0, 1, P, P, "上个月我用圆规划过自己的手背", "low"),
        (83.0, 90.0, 1, P, P, "班里有人给我起外号,还把我的书扔进垃圾桶", None),
        (92.0, 97.0, 0, C, C, "谢谢你愿意告诉我这些,这很重要", None),
        # window 2
        (121.0, 129.0, 1, P, G, "我现在覺得什么都没有意思,提不起劲", "flat"),  # flip
        (131.0, 137.0, 2, G, G, "老师,她以前不是这样的", None),
        (139.0, 147.0, 0, C, C, "这种提不起劲的感觉,从什么时候开始的", None),
        (149.0, 156.0, 1, P, P, "大概从分班考试以后,三个多月了", None),
        # window 3
        (181.0, 189.0, 0, C, C, "我们来商量一个让你每天轻松一点的小计划", None),
        (191.0, 197.0, 1, P, P, "我可以试试晚饭后出去走十分钟", None),
    ]
    parse = {
        0: analysis_text(
            "Family withdrawal; the mother reports near-total room isolation; the "
            "counselor's last line paraphrases the patient's stated alienation.",
            ["ProblemManagement"],
            [(1, "retain-patient"), (2, "retain-patient"), (3, "retain-paraphrase")],
            "clinical", "depression",
        ),
        1: analysis_text(
            "Direct self-harm disclosure plus bullying by classmates; highest priority.",
            ["ProblemManagement"],
            [(1, "retain-patient"), (2, "retain-patient")],
            "clinical", "suicidal-ideation",
        ),
        2: analysis_text(
            "Anhedonia for over three months, onset tied to the placement exam.",
            ["ProblemManagement", "ObjectiveEvaluation"],
            [(0, "retain-patient"), (3, "retain-patient")],
            "clinical", "anhedonia",
        ),
        3: analysis_text(
            "Planning a small behavioral activation step.",
            ["SupportiveGuidance"],
            [(1, "retain-patient")],
            "normative", "calm",
        ),
    }
    extract = {
        0: [
            {"dimension": "C1", "utterance": "在家里我不想说话,他们也不懂我", "insight": "家庭沟通隔绝,感到不被理解", "emotion": None},
            {"dimension": "E2", "utterance": "她这两个星期几乎不出房间", "insight": "近两周显著社交退缩", "emotion": None},
        ],
        1: [
            {"dimension": "B2", "utterance": "上个月我用圆规划过自己的手背", "insight": "近一个月有自伤行为", "emotion": None},
            {"dimension": "E7", "utterance": "班里有人给我起外号,还把我的书扔进垃圾桶", "insight": "遭受同学起外号和毁坏物品的欺凌", "emotion": None},
        ],
        2: [
            {"dimension": "E3", "utterance": "我现在覺得什么都没有意思,提不起劲", "insight": "持续三个月以上的兴趣丧失", "emotion": None},
            {"dimension": "E2", "utterance": "大概从分班考试以后,三个多月了", "insight": "症状始于分班考试后", "emotion": None},
        ],
        3: [
            {"dimension": "A1", "utterance": "我可以试试晚饭后出去走十分钟", "insight": "愿意尝试晚饭后短时散步", "emotion": None},
        ],
    }
    profile = [
        "C1: 家庭内沟通隔绝,患者感到不被家人理解。 [ev-1]",
        "B2: 近一个月内有明确的自伤行为史。 [ev-3]",
        "E2: 近两周显著退缩,症状始于分班考试之后。 [ev-2, ev-6]",
        "E3: 兴趣丧失持续超过三个月。 [ev-5]",
        "E7: 在班级中遭受持续欺凌。 [ev-4]",
        "A1: 愿意尝试低强度的日常活动安排。 [ev-7]",
    ]
    return write_session("s02_family", seed=202, speakers=3, segment_plan=plan,
                         parse_plan=parse, extract_plan=extract, profile_lines=profile)


# ------------------------------------------------------------------ s03

def build_s03():
    C, P = "counselor", "patient"
    plan = [
        (3.0, 8.0, 0, C, C, "这周有什么想聊的", None),
        (10.0, 17.0, 1, P, P, "手机被妈妈没收了,我们大吵了一架", None),
        (64.0, 70.0, 0, C, C, "吵架之后你是怎么让自己平静下来的", None),
        (72.0, 80.0, 1, P, P, "我听了一晚上歌,第二天还是很生气", None),
        (124.0, 130.0, 1, P, P, "这周我不想谈别的了", None),
    ]
    parse = {
        0: analysis_text(
            "Phone confiscation triggered a loud family fight.",
            ["ProblemManagement"],
            [(1, "retain-patient")],
            "normative", "frustration",
        ),
        # parse_1 is deliberately malformed; parse_1.retry.txt below heals it
        1: "The reasoning output lost its fenced block somehow.",
    }
    extract = {
        0: [
            {"dimension": "Q5", "utterance": "手机被妈妈没收了,我们大吵了一架", "insight": "unknown dimension item"},
            {"dimension": "C1", "utterance": "这句话并不在转录里", "insight": "non-verbatim item"},
            {"dimension": "C1", "utterance": "手机被妈妈没收了,我们大吵了一架", "insight": "因手机被没收与母亲激烈冲突", "emotion": None},
        ],
        1: [
            {"dimension": "E1", "utterance": "我听了一晚上歌,第二天还是很生气", "insight": "愤怒情绪持续到次日", "emotion": None},
        ],
        # window 2 has no fixtures at all -> MockMiss -> skipped
    }
    extra = {
        "parse_1.retry.txt": analysis_text(
            "Anger persisted overnight after the fight; coping via music.",
            ["ProblemManagement"],
            [(1, "retain-patient")],
            "normative", "frustration",
        ),
    }
    profile = [
        "C1: 因手机被没收与母亲发生激烈冲突。 [ev-1]",
        "E1: 冲突后的愤怒情绪持续到第二天。 [ev-2]",
        "B2: 这是一条引用了不存在证据的声明。 [ev-999]",
    ]
    return write_session("s03_adversarial", seed=303, speakers=2, segment_plan=plan,
                         parse_plan=parse, extract_plan=extract, profile_lines=profile,
                         extra_mock=extra)


# ------------------------------------------------------------ verification

EXPECTATIONS = {
    "s01_teen": {"accepted": 5, "rejected": 1, "skipped": 0, "claims": 5, "k": 2},
    "s02_family": {"accepted": 7, "rejected": 0, "skipped": 0, "claims": 6, "k": 3},
    "s03_adversarial": {"accepted": 2, "rejected": 0, "skipped": 1, "claims": 2, "k": 2},
}


def verify(session_dir: Path):
    from streamprofile.runner import SessionSource, run_session

    name = session_dir.name
    config = load_config(session_dir / "config.json")
    enrollment = json.loads((session_dir / "enrollment.json").read_text("utf-8"))
    result = run_session(
        config,
        SessionSource.from_jsonl(session_dir / "segments.jsonl"),
        out_dir=None,
        session_id=name,
        enrollment=enrollment,
    )
    want = EXPECTATIONS[name]
    got = {
        "accepted": result.report["evidence_accepted"],
        "rejected": result.report["evidence_rejected_duplicate"],
        "skipped": len(result.report["windows_skipped"]),
        "claims": len(result.profile.claims),
        "k": result.recluster.cluster.k,
    }
    assert got == want, f"{name}: expected {want}, got {got}"
    assert result.grounding.violations == (), f"{name}: grounding violations"
    truth = json.loads((session_dir / "truth.json").read_text("utf-8"))
    corrected = [s.role for s in result.corrected_segments]
    assert corrected == truth["roles"], f"{name}: corrected roles differ from truth"
    print(f"  {name}: ok ({got})")


def main():
    sessions = [build_s01(), build_s02(), build_s03()]
    print("verifying fixtures against the engine:")
    for session_dir in sessions:
        verify(session_dir)
    print("fixtures written to", ROOT)


if __name__ == "__main__":
    main()
